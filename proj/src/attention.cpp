#include "catpose/attention.hpp"

#include <cmath>

namespace catpose {

void AttentionConfig::validate() const {
  if (heads < 1) throw Error(ErrorCode::InvalidConfig, "heads must be >= 1");
  if (head_dim < 1) throw Error(ErrorCode::InvalidConfig, "head_dim must be >= 1");
  if (mode == AttentionMode::Linear && projection_dim < 1)
    throw Error(ErrorCode::InvalidConfig, "projection_dim must be >= 1");
}

MultiheadAttention::MultiheadAttention(nn::ParamStore& store, const std::string& name,
                                       int query_dim, int kv_dim, int out_dim,
                                       const AttentionConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  const int inner = cfg_.heads * cfg_.head_dim;
  wq_ = store.create(name + ".wq", nn::xavier_init(query_dim, inner, rng));
  wk_ = store.create(name + ".wk", nn::xavier_init(kv_dim, inner, rng));
  wv_ = store.create(name + ".wv", nn::xavier_init(kv_dim, inner, rng));
  wo_ = store.create(name + ".wo", nn::xavier_init(inner, out_dim, rng));
  if (cfg_.mode == AttentionMode::Linear)
    landmarks_ = store.create(name + ".landmarks", nn::xavier_init(cfg_.projection_dim, inner, rng));
}

MultiheadAttention MultiheadAttention::identity(nn::ParamStore& store, const std::string& name,
                                                int dim) {
  MultiheadAttention a;
  a.cfg_.heads = 1;
  a.cfg_.head_dim = dim;
  a.cfg_.mode = AttentionMode::Exact;
  a.identity_ = true;
  a.wq_ = store.create(name + ".wq", Mat::Identity(dim, dim));
  a.wk_ = store.create(name + ".wk", Mat::Identity(dim, dim));
  a.wv_ = store.create(name + ".wv", Mat::Identity(dim, dim));
  a.wo_ = store.create(name + ".wo", Mat::Identity(dim, dim));
  return a;
}

ad::Var MultiheadAttention::forward(const ad::Var& q_feats, const ad::Var& k_feats,
                                    const ad::Var& v_feats) const {
  if (k_feats.rows() != v_feats.rows())
    throw Error(ErrorCode::ShapeMismatch, "key and value row counts differ");
  if (q_feats.cols() != wq_.rows() || k_feats.cols() != wk_.rows() || v_feats.cols() != wv_.rows())
    throw Error(ErrorCode::ShapeMismatch, "feature widths do not match attention projections");

  const int dh = cfg_.head_dim;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(dh));
  ad::Var q = ad::matmul(q_feats, wq_);
  ad::Var k = ad::matmul(k_feats, wk_);
  ad::Var v = ad::matmul(v_feats, wv_);

  std::vector<ad::Var> heads;
  for (int h = 0; h < cfg_.heads; ++h) {
    ad::Var qh = ad::slice_cols(q, h * dh, dh);
    ad::Var kh = ad::slice_cols(k, h * dh, dh);
    ad::Var vh = ad::slice_cols(v, h * dh, dh);
    if (cfg_.mode == AttentionMode::Linear) {
      // Landmarks summarize keys/values to a fixed row count before the
      // query softmax; every matmul is linear in the key count.
      ad::Var lh = ad::slice_cols(landmarks_, h * dh, dh);
      ad::Var mix = ad::softmax_rows(ad::scale(ad::matmul_nt(lh, kh), inv_sqrt_d));
      kh = ad::matmul(mix, kh);
      vh = ad::matmul(mix, vh);
    }
    ad::Var weights = ad::softmax_rows(ad::scale(ad::matmul_nt(qh, kh), inv_sqrt_d));
    heads.push_back(ad::matmul(weights, vh));
  }
  ad::Var merged = cfg_.heads == 1 ? heads[0] : ad::concat_cols(heads);
  return ad::matmul(merged, wo_);
}

AttentionBlock::AttentionBlock(nn::ParamStore& store, const std::string& name, int dim, int kv_dim,
                               const AttentionConfig& cfg, Rng& rng) {
  AttentionConfig c = cfg;
  if (dim % c.heads != 0)
    throw Error(ErrorCode::InvalidConfig, "attention block width not divisible by heads");
  c.head_dim = dim / c.heads;
  attn_ = MultiheadAttention(store, name + ".attn", dim, kv_dim, dim, c, rng);
  gain_ = store.create(name + ".ln.gain", Mat::Ones(1, dim));
  bias_ = store.create(name + ".ln.bias", Mat::Zero(1, dim));
}

ad::Var AttentionBlock::forward(const ad::Var& x, const ad::Var& kv) const {
  return ad::layer_norm_rows(ad::add(x, attn_.forward(x, kv, kv)), gain_, bias_);
}

CrossEnhancer::CrossEnhancer(nn::ParamStore& store, const std::string& name,
                             const std::vector<int>& widths, const AttentionConfig& cfg, Rng& rng) {
  for (size_t l = 0; l < widths.size(); ++l)
    blocks_.emplace_back(store, name + ".level" + std::to_string(l), widths[l], widths[l], cfg, rng);
}

FeaturePyramid CrossEnhancer::enhance(const FeaturePyramid& mesh_pyramid,
                                      const FeaturePyramid& scene_pyramid) const {
  if (mesh_pyramid.levels.size() != scene_pyramid.levels.size())
    throw Error(ErrorCode::LevelMismatch, "pyramid level counts differ");
  if (mesh_pyramid.levels.size() != blocks_.size())
    throw Error(ErrorCode::LevelMismatch, "pyramid depth does not match enhancer");

  FeaturePyramid out;
  for (size_t l = 0; l < blocks_.size(); ++l) {
    const auto& mesh_level = mesh_pyramid.levels[l];
    ad::Var retrieved = blocks_[l].forward(mesh_level.features, scene_pyramid.levels[l].features);
    PyramidLevel level;
    level.features = ad::concat_cols({mesh_level.features, retrieved});
    level.indices = mesh_level.indices;
    level.points = mesh_level.points;
    out.levels.push_back(std::move(level));
  }
  out.global_feature = mesh_pyramid.global_feature;
  return out;
}

}  // namespace catpose
