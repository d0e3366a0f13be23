#pragma once

#include <string>
#include <vector>

#include "catpose/config.hpp"
#include "catpose/deformnet.hpp"
#include "catpose/evalkit.hpp"
#include "catpose/regnet.hpp"
#include "catpose/synthdata.hpp"

namespace catpose {

struct InstanceData {
  int id = 0;
  bool train = true;
  TriangleMesh gt_mesh;       // normalized frame
  PointCloud coarse;          // multi-view weak supervision, normalized frame
  std::vector<SceneSample> views;
};

struct FixtureDataset {
  TriangleMesh template_mesh;
  CameraIntrinsics camera;
  std::vector<InstanceData> instances;
};

// Synthetic category with posed depth views and per-instance coarse clouds;
// deterministic per config seed.
FixtureDataset build_fixture(const ExperimentConfig& cfg);

void write_fixture(const FixtureDataset& ds, const std::string& dir, const std::string& cfg_hash);
FixtureDataset load_fixture(const std::string& dir);

// Masked scene cloud subsampled to a fixed budget (seeded).
PointCloud scene_cloud(const SceneSample& view, int n_points, uint64_t seed);

std::vector<DeformSample> make_deform_dataset(const FixtureDataset& ds,
                                              const ExperimentConfig& cfg);

// Runs the frozen deformation net over training views to produce the
// registration stage's inputs.
std::vector<RegSample> make_reg_dataset(const FixtureDataset& ds, const DeformNet& deform,
                                        const ExperimentConfig& cfg);

struct EvalOutputs {
  MetricReport report;
  // Per held-out instance (averaged over its eval views).
  std::vector<double> deformed_chamfer;
  std::vector<double> template_chamfer;
  // Mean squared nearest-neighbor residual, rendered-vs-scene.
  double mean_residual_initial = 0.0;
  double mean_residual_refined = 0.0;
};

// deform -> register -> (optional ICP refinement) -> metrics on held-out
// instances.
EvalOutputs evaluate_pipeline(const FixtureDataset& ds, const DeformNet& deform, const RegNet& reg,
                              const ExperimentConfig& cfg, bool icp_refine);

// Template-vs-scene similarity ICP from a documented initialization
// (scene centroid, identity rotation, bounding-radius scale ratio).
EvalOutputs evaluate_icp_baseline(const FixtureDataset& ds, const ExperimentConfig& cfg);

// Bounded-concurrency helper; results assembled in index order.
void parallel_for(int count, const std::function<void(int)>& fn);

}  // namespace catpose
