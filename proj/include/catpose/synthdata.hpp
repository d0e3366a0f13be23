#pragma once

#include <atomic>
#include <optional>
#include <string>
#include <vector>

#include "catpose/renderer.hpp"
#include "catpose/types.hpp"

namespace catpose {

enum class ShapeFamily { Box, Cylinder, TaperedCup, Composite };

ShapeFamily shape_family_from_string(const std::string& name);
std::string to_string(ShapeFamily family);

struct CategorySpec {
  ShapeFamily family = ShapeFamily::TaperedCup;
  int instance_count = 20;
  uint64_t seed = 0;
  // Shape parameter ranges (normalized units before diameter scaling).
  std::pair<double, double> height_range{0.8, 1.4};
  std::pair<double, double> radius_range{0.25, 0.45};
  std::pair<double, double> taper_range{0.55, 1.0};   // top/base radius ratio
  std::pair<double, double> stub_range{0.0, 0.0};     // radial bump amplitude
  int segments = 20;
  int rings = 10;

  void validate() const;
};

struct SceneSample {
  DepthImage depth;
  Eigen::Matrix<uint8_t, Eigen::Dynamic, Eigen::Dynamic> mask;  // nonzero = instance
  SimilarityTransform gt_transform;
  TriangleMesh gt_mesh;  // may be empty for ingested real data
  CameraIntrinsics intrinsics;
};

// Watertight lattice solids with outward normals, diameter-normalized to 1,
// symmetry axis +y. Deterministic per seed.
std::vector<TriangleMesh> generate_category(const CategorySpec& spec);

// The mid-range representative of the family (template before perturbation).
TriangleMesh generate_template(const CategorySpec& spec);

// 3x3x3 lattice cage with uniform node noise; vertices follow their
// trilinear cage coordinates, connectivity preserved.
TriangleMesh cage_perturb(const TriangleMesh& mesh, double magnitude, uint64_t seed);

// Renders the posed mesh, adds i.i.d. Gaussian depth noise on valid pixels,
// and records ground truth. Throws NotVisible below 100 covered pixels.
SceneSample simulate_scene(const TriangleMesh& mesh, const SimilarityTransform& t,
                           const CameraIntrinsics& cam, double noise_sigma, uint64_t seed);

// Masked scene points in the camera frame.
PointCloud lift_masked(const SceneSample& sample);

// Appendix-style weak supervision: selects n_views by farthest rotation
// sampling, lifts masked depth, maps every view back to the normalized frame
// with the inverse ground-truth similarity, concatenates, and removes
// outliers with the mean-shift filter.
PointCloud build_coarse_pointcloud(const std::vector<SceneSample>& views, int n_views,
                                   double bandwidth, uint64_t seed = 0, int max_points = 4096);

// Streaming reader for the NOCS-style directory layout (16-bit depth PNG in
// millimeters, 8-bit mask PNG, per-frame pose text, camera.txt). Loads one
// frame at a time.
class NocsIngest {
 public:
  explicit NocsIngest(const std::string& root);

  // Returns the next sample or nullopt at the end.
  std::optional<SceneSample> next();

  const CameraIntrinsics& intrinsics() const { return cam_; }
  int frame_count() const { return static_cast<int>(frames_.size()); }

  // Instrumentation for the single-frame memory contract.
  static int live_frames() { return live_frames_.load(); }
  static int peak_live_frames() { return peak_live_frames_.load(); }
  static void reset_instrumentation();

 private:
  std::string root_;
  CameraIntrinsics cam_;
  std::vector<std::string> frames_;  // frame id prefixes
  size_t cursor_ = 0;

  static std::atomic<int> live_frames_;
  static std::atomic<int> peak_live_frames_;
};

// Writes one frame in the NOCS-style layout (used by the fixture writer and
// the round-trip tests).
void write_nocs_frame(const std::string& dir, const std::string& frame_id,
                      const SceneSample& sample);
void write_nocs_camera(const std::string& dir, const CameraIntrinsics& cam);

}  // namespace catpose
