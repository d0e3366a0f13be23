#pragma once

#include <vector>

#include "catpose/autodiff.hpp"
#include "catpose/nn.hpp"
#include "catpose/types.hpp"

namespace catpose {

struct EncoderConfig {
  int neighbors_k = 16;
  std::vector<int> level_widths{64, 128, 256};
  std::vector<double> downsample_ratios{1.0, 0.5, 0.25};
  int kernel_support = 4;  // learnable direction kernels per layer

  void validate() const;
};

// k nearest Euclidean neighbors per point, self excluded, ties broken by
// ascending index.
std::vector<std::vector<int>> build_knn_graph(const PointCloud& pc, int k);

struct PyramidLevel {
  ad::Var features;          // per-point features
  std::vector<int> indices;  // into the original input cloud
  MatX3 points;
};

struct FeaturePyramid {
  std::vector<PyramidLevel> levels;
  ad::Var global_feature;  // 1 x widths.back()
};

// One shift- and scale-invariant graph convolution: responses combine a
// pointwise feature map with, per learnable kernel direction, the max over
// neighbors of (cosine between the unit edge direction and the kernel)
// times a learned map of the neighbor feature. Only unit directions enter,
// so global translation and uniform positive scaling leave the output
// unchanged (up to rounding).
class InvariantConvLayer {
 public:
  InvariantConvLayer() = default;
  InvariantConvLayer(nn::ParamStore& store, const std::string& name, int in_dim, int out_dim,
                     int support, Rng& rng);

  ad::Var forward(const MatX3& points, const std::vector<std::vector<int>>& graph,
                  const ad::Var& features) const;

  int out_dim() const { return out_dim_; }

 private:
  std::vector<ad::Var> feature_maps_;  // per kernel, in x out
  std::vector<ad::Var> directions_;    // per kernel, 1 x 3
  ad::Var self_map_;                   // in x out
  ad::Var bias_;                       // 1 x out
  int out_dim_ = 0;
};

class InvariantEncoder {
 public:
  InvariantEncoder() = default;
  InvariantEncoder(nn::ParamStore& store, const std::string& name, const EncoderConfig& cfg,
                   Rng& rng);

  // Pyramid with farthest-point downsampling between levels and a max-pooled
  // global feature. Pre: at least 32 points.
  FeaturePyramid encode(const PointCloud& pc) const;

  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::vector<InvariantConvLayer> layers_;
};

}  // namespace catpose
