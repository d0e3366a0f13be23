#pragma once

#include <string>
#include <vector>

#include "catpose/autodiff.hpp"
#include "catpose/encoder.hpp"
#include "catpose/nn.hpp"

namespace catpose {

enum class AttentionMode { Exact, Linear };

struct AttentionConfig {
  int heads = 4;
  int head_dim = 16;
  AttentionMode mode = AttentionMode::Linear;
  int projection_dim = 64;  // landmark count for the linear approximation

  void validate() const;
};

// Scaled dot-product multi-head attention. Exact mode is the quadratic
// softmax reference; linear mode routes keys/values through a learned set of
// landmark rows, so cost grows linearly with the key count.
class MultiheadAttention {
 public:
  MultiheadAttention() = default;
  MultiheadAttention(nn::ParamStore& store, const std::string& name, int query_dim, int kv_dim,
                     int out_dim, const AttentionConfig& cfg, Rng& rng);

  // Identity projections with a single head (exact mode); the raw
  // softmax(QK^T/sqrt(d))V map used as a reference in tests.
  static MultiheadAttention identity(nn::ParamStore& store, const std::string& name, int dim);

  ad::Var forward(const ad::Var& q_feats, const ad::Var& k_feats, const ad::Var& v_feats) const;

 private:
  ad::Var wq_, wk_, wv_, wo_;
  ad::Var landmarks_;  // projection_dim x (heads*head_dim), linear mode
  AttentionConfig cfg_;
  bool identity_ = false;
};

// Residual + layer norm around an attention layer; query and output widths
// must match.
class AttentionBlock {
 public:
  AttentionBlock() = default;
  AttentionBlock(nn::ParamStore& store, const std::string& name, int dim, int kv_dim,
                 const AttentionConfig& cfg, Rng& rng);

  ad::Var forward(const ad::Var& x, const ad::Var& kv) const;

 private:
  MultiheadAttention attn_;
  ad::Var gain_, bias_;
};

// Multi-scale geometry enhancement: at every pyramid level, template features
// are concatenated with what they retrieve from the scene level (template as
// queries, scene as keys and values). Level widths double on output.
class CrossEnhancer {
 public:
  CrossEnhancer() = default;
  CrossEnhancer(nn::ParamStore& store, const std::string& name, const std::vector<int>& widths,
                const AttentionConfig& cfg, Rng& rng);

  FeaturePyramid enhance(const FeaturePyramid& mesh_pyramid,
                         const FeaturePyramid& scene_pyramid) const;

 private:
  std::vector<AttentionBlock> blocks_;
};

}  // namespace catpose
