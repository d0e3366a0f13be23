#pragma once

#include "catpose/autodiff.hpp"
#include "catpose/types.hpp"

namespace catpose {

struct CameraIntrinsics {
  double fx = 160.0, fy = 160.0;
  double cx = 64.0, cy = 64.0;
  int width = 128, height = 128;

  void validate() const;
};

// Depth in meters; 0 encodes "no measurement".
struct DepthImage {
  Mat values;

  int width() const { return static_cast<int>(values.cols()); }
  int height() const { return static_cast<int>(values.rows()); }
  Eigen::Index valid_count() const { return (values.array() > 0.0).count(); }
};

// Hard z-buffer rasterization of the transformed mesh. Faces whose outward
// normal points along the viewing ray are culled as invisible back faces;
// faces touching the near plane (z <= 1e-4) are dropped whole. Depth is
// perspective-correct barycentric interpolation at integer pixel coordinates.
DepthImage render_depth(const TriangleMesh& mesh, const SimilarityTransform& t,
                        const CameraIntrinsics& cam);

// Pinhole back-projection of valid pixels, row-major order:
// ((u-cx)z/fx, (v-cy)z/fy, z).
PointCloud lift_depth(const DepthImage& d, const CameraIntrinsics& cam);

namespace ad_ops {

// Differentiable render: camera-frame vertices as a Var; gradients reach
// vertex positions through barycentric weights and interpolated depth.
// Coverage (which face wins each pixel) is fixed from the forward pass.
ad::Var render_depth_diff(const MatX3i& triangles, const ad::Var& cam_vertices,
                          const CameraIntrinsics& cam);

// Lift with the valid pixel set frozen from the forward depth value.
ad::Var lift_depth_diff(const ad::Var& depth, const CameraIntrinsics& cam);

}  // namespace ad_ops

}  // namespace catpose
