#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "catpose/attention.hpp"
#include "catpose/diffops.hpp"
#include "catpose/nn.hpp"
#include "catpose/renderer.hpp"

namespace catpose {

struct CorrespondenceConfig {
  int top_k = 400;  // K
  int groups_train = 10;      // G during training
  int group_size_train = 40;  // K_g during training
  int groups_test = 100;
  int group_size_test = 4;
};

struct PoseLossWeights {
  double lambda_geo = 10.0;
  double lambda_w_corr = 0.1;
};

// Weighted point pairs between the deformed-model frame and the camera frame.
struct CorrespondenceSet {
  std::vector<int> model_idx;
  std::vector<int> scene_idx;
  ad::Var p;  // K' x 3 model-frame points
  ad::Var q;  // K' x 3 camera-frame points
  ad::Var w;  // K' x 1 ratio-test weights in [0, 1]

  Eigen::Index size() const { return p.valid() ? p.rows() : 0; }
};

struct RegNetConfig {
  std::vector<int> sa_points{512, 128};  // set-abstraction center counts
  std::vector<int> sa_widths{128, 256};
  int input_width = 64;
  int feature_dim = 64;
  int sa_neighbors = 16;
  AttentionConfig attention;
  CorrespondenceConfig correspondence;

  void validate() const;
};

struct RegTrainConfig {
  int epochs = 50;
  double lr = 2e-5;
  int halve_every = 10;
};

struct PoseEstimate {
  SimilarityTransform transform;
  CorrespondenceSet correspondences;
  int best_group = -1;
  double best_residual = 0.0;
  std::vector<double> group_residuals;
  // Transform as graph outputs, for loss backpropagation.
  ad::Var scale_v, rotation_v, translation_v;
};

// Splits correspondence indices into G groups of min(K_g, count) without
// replacement inside a group, independent across groups. Deterministic.
std::vector<std::vector<int>> split_groups(int count, int groups, int group_size, uint64_t seed);

// Closed-form similarity fit on plain pairs; optionally reports the attained
// squared loss. Throws DegenerateConfiguration for collinear or coincident
// source points.
SimilarityTransform umeyama_fit(const MatX3& source, const MatX3& target,
                                double* residual = nullptr);

// Siamese hierarchical point encoder with linear-attention self and cross
// context, producing unit-normalized per-point descriptors.
class RegNet {
 public:
  RegNet(const RegNetConfig& cfg, uint64_t seed);

  // Per-point features for both clouds (model first). Inputs are centered
  // and radius-normalized before the network; descriptors are unit rows.
  std::pair<ad::Var, ad::Var> extract_features(const PointCloud& model_pc,
                                               const PointCloud& scene_pc) const;

  // Nearest-feature matching with the differentiable ratio test; keeps the
  // top K pairs by weight.
  static CorrespondenceSet explore_correspondences(const ad::Var& model_feats,
                                                   const ad::Var& scene_feats,
                                                   const ad::Var& model_pts,
                                                   const ad::Var& scene_pts, int top_k);

  // Group fitting + lowest-residual selection over the correspondences.
  static PoseEstimate estimate_from_correspondences(const CorrespondenceSet& corrs, int groups,
                                                    int group_size, uint64_t seed);

  // Full path: features -> correspondences -> groups -> fits -> best group.
  PoseEstimate estimate_pose_scale(const PointCloud& model_pc, const PointCloud& scene_pc,
                                   bool training_split, uint64_t seed) const;

  struct LossVars {
    ad::Var geo, w_corr, total;
    double geo_value() const { return ad::scalar(geo); }
    double w_corr_value() const { return ad::scalar(w_corr); }
    double total_value() const { return ad::scalar(total); }
  };

  // lambda_geo * chamfer(lifted_pred, scene) + lambda_w_corr * mean weighted
  // squared correspondence residual.
  static LossVars registration_loss(const ad::Var& lifted_pred, const PointCloud& scene_pc,
                                    const CorrespondenceSet& corrs, const PoseEstimate& estimate,
                                    const PoseLossWeights& w);

  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }
  const RegNetConfig& config() const { return cfg_; }

 private:
  struct CloudState {
    std::vector<MatX3> points;      // positions per level, level 0 = all
    std::vector<ad::Var> features;  // features per level
  };
  CloudState encode_levels(const MatX3& normalized_points) const;
  ad::Var decode_levels(const CloudState& state, const ad::Var& bottleneck) const;

  RegNetConfig cfg_;
  nn::ParamStore store_;
  nn::Mlp input_mlp_;
  std::vector<nn::Mlp> sa_mlps_;
  std::vector<nn::Mlp> fp_mlps_;
  AttentionBlock self_block_;
  AttentionBlock cross_block_;
};

struct RegSample {
  TriangleMesh model_mesh;   // deformed mesh, normalized frame (frozen stage 1)
  PointCloud model_points;   // sampled from the model mesh surface
  PointCloud scene_points;   // masked scene cloud, camera frame
  CameraIntrinsics camera;
};

// Stage two: optimizes the self-supervised registration loss end to end
// through sampling, fitting, and rendering. Deformation weights stay frozen
// (the samples carry already-deformed meshes).
TrainCurve train_registration(RegNet& net, const std::vector<RegSample>& dataset,
                              const RegTrainConfig& tcfg, const PoseLossWeights& weights,
                              uint64_t seed, nn::Adam* optimizer = nullptr, int start_epoch = 0,
                              const std::function<void(int, double)>& on_epoch = nullptr);

}  // namespace catpose
