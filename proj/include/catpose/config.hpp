#pragma once

#include <string>
#include <vector>

#include "catpose/deformnet.hpp"
#include "catpose/icp.hpp"
#include "catpose/regnet.hpp"
#include "catpose/renderer.hpp"
#include "catpose/synthdata.hpp"

namespace catpose {

struct DataConfig {
  std::string family = "tapered_cup";
  int train_instances = 20;
  int test_instances = 5;
  int views_per_instance = 16;
  int eval_views = 4;
  int coarse_views = 16;  // farthest-rotation selection count
  double noise_sigma = 0.002;
  double meanshift_bandwidth = 0.05;
  bool symmetric = true;
  std::pair<double, double> scale_range{0.15, 0.3};
  std::pair<double, double> elevation_range_deg{20.0, 70.0};
  std::pair<double, double> distance_range{0.7, 1.0};
  CategorySpec category;  // shape parameter ranges, lattice resolution
};

struct ExperimentConfig {
  uint64_t seed = 0;
  std::string output_dir = "out";

  EncoderConfig encoder;
  AttentionConfig attention;

  std::vector<int> decoder_hidden{512, 256};
  bool use_cross_enhance = true;
  int n_samples = 2048;
  ChamferReduction chamfer_reduction = ChamferReduction::Mean;
  DeformLossWeights deform_weights;
  DeformTrainConfig train_deform;

  RegNetConfig registration;
  PoseLossWeights pose_weights;
  RegTrainConfig train_reg;
  int n_model_points = 1024;
  int n_scene_points = 1024;

  CameraIntrinsics renderer;
  IcpConfig icp;
  DataConfig data;

  DeformNetConfig deform_net_config() const;

  void validate() const;
};

// JSON round-trip with full defaulting; unknown keys are rejected with their
// dotted path.
ExperimentConfig config_from_json_text(const std::string& text);
ExperimentConfig load_config(const std::string& path);
std::string config_to_json_text(const ExperimentConfig& cfg);

// "a.b.c=value" style override applied on top of the JSON form.
std::string apply_config_overrides(const std::string& json_text,
                                   const std::vector<std::string>& overrides);

// FNV-1a over the canonical JSON form.
std::string config_hash(const ExperimentConfig& cfg);
// Hash over the architecture-determining subset only (network shapes).
std::string architecture_hash(const ExperimentConfig& cfg);

}  // namespace catpose
