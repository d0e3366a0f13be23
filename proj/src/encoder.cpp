#include "catpose/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "catpose/geometry.hpp"

namespace catpose {

void EncoderConfig::validate() const {
  if (level_widths.empty() || level_widths.size() != downsample_ratios.size())
    throw Error(ErrorCode::InvalidConfig, "level_widths and downsample_ratios must match");
  if (neighbors_k < 3) throw Error(ErrorCode::InvalidConfig, "neighbors_k must be >= 3");
  if (downsample_ratios[0] != 1.0)
    throw Error(ErrorCode::InvalidConfig, "level 0 must cover all points (ratio 1)");
  for (double r : downsample_ratios)
    if (!(r > 0.0) || r > 1.0) throw Error(ErrorCode::InvalidConfig, "ratios must be in (0, 1]");
  if (kernel_support < 1) throw Error(ErrorCode::InvalidConfig, "kernel_support must be >= 1");
}

std::vector<std::vector<int>> build_knn_graph(const PointCloud& pc, int k) {
  const Eigen::Index n = pc.size();
  if (n <= k) throw Error(ErrorCode::TooFewPoints, "need more points than neighbors");
  std::vector<std::vector<int>> graph(static_cast<size_t>(n));
  std::vector<std::pair<double, int>> dist(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      dist[static_cast<size_t>(j)] = {(pc.points.row(i) - pc.points.row(j)).squaredNorm(),
                                      static_cast<int>(j)};
    dist[static_cast<size_t>(i)].first = std::numeric_limits<double>::infinity();
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    graph[static_cast<size_t>(i)].resize(static_cast<size_t>(k));
    for (int t = 0; t < k; ++t) graph[static_cast<size_t>(i)][static_cast<size_t>(t)] = dist[static_cast<size_t>(t)].second;
  }
  return graph;
}

InvariantConvLayer::InvariantConvLayer(nn::ParamStore& store, const std::string& name, int in_dim,
                                       int out_dim, int support, Rng& rng)
    : out_dim_(out_dim) {
  self_map_ = store.create(name + ".self", nn::xavier_init(in_dim, out_dim, rng));
  bias_ = store.create(name + ".bias", Mat::Zero(1, out_dim));
  for (int s = 0; s < support; ++s) {
    feature_maps_.push_back(
        store.create(name + ".k" + std::to_string(s) + ".map", nn::xavier_init(in_dim, out_dim, rng)));
    // Directions start uniform on the unit sphere.
    Mat d(1, 3);
    const double z = rng.uniform(-1.0, 1.0);
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    d << r * std::cos(phi), r * std::sin(phi), z;
    directions_.push_back(store.create(name + ".k" + std::to_string(s) + ".dir", std::move(d)));
  }
}

ad::Var InvariantConvLayer::forward(const MatX3& points, const std::vector<std::vector<int>>& graph,
                                    const ad::Var& features) const {
  const Eigen::Index n = points.rows();
  if (static_cast<Eigen::Index>(graph.size()) != n || features.rows() != n)
    throw Error(ErrorCode::GraphMismatch, "graph/features inconsistent with points");
  const int k = static_cast<int>(graph[0].size());
  const int support = static_cast<int>(feature_maps_.size());
  const int out = out_dim_;

  // Unit edge directions; the only geometric input, hence the invariance.
  auto unit_dirs = std::make_shared<Mat>(n * k, 3);
  for (Eigen::Index i = 0; i < n; ++i)
    for (int t = 0; t < k; ++t) {
      Eigen::RowVector3d d = points.row(graph[static_cast<size_t>(i)][static_cast<size_t>(t)]) - points.row(i);
      const double len = d.norm();
      unit_dirs->row(i * k + t) = len > 1e-15 ? (d / len).eval() : Eigen::RowVector3d::Zero();
    }

  ad::Var result = ad::add(ad::matmul(features, self_map_), bias_);
  auto graph_ptr = std::make_shared<std::vector<std::vector<int>>>(graph);

  for (int s = 0; s < support; ++s) {
    ad::Var transformed = ad::matmul(features, feature_maps_[static_cast<size_t>(s)]);
    const ad::Var& dir = directions_[static_cast<size_t>(s)];

    const Eigen::RowVector3d dval = dir.value().row(0);
    const double dnorm = std::max(dval.norm(), 1e-12);
    const Eigen::RowVector3d dhat = dval / dnorm;

    Mat value(n, out);
    auto arg = std::make_shared<Eigen::MatrixXi>(n, out);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int c = 0; c < out; ++c) {
        double best = -std::numeric_limits<double>::infinity();
        int best_t = 0;
        for (int t = 0; t < k; ++t) {
          const double cosv = unit_dirs->row(i * k + t).dot(dhat);
          const double resp = cosv * transformed.value()(graph[static_cast<size_t>(i)][static_cast<size_t>(t)], c);
          if (resp > best) {
            best = resp;
            best_t = t;
          }
        }
        value(i, c) = best;
        (*arg)(i, c) = best_t;
      }
    }

    ad::Var term(ad::make_node(std::move(value), {transformed.node(), dir.node()},
                               [unit_dirs, graph_ptr, arg, k](ad::Node& node) {
      const Mat& tval = node.parents[0]->value;
      const Eigen::RowVector3d dval = node.parents[1]->value.row(0);
      const double dnorm = std::max(dval.norm(), 1e-12);
      const Eigen::RowVector3d dhat = dval / dnorm;
      Mat gT = Mat::Zero(tval.rows(), tval.cols());
      Eigen::RowVector3d gdir = Eigen::RowVector3d::Zero();
      for (Eigen::Index i = 0; i < node.value.rows(); ++i)
        for (Eigen::Index c = 0; c < node.value.cols(); ++c) {
          const double g = node.grad(i, c);
          if (g == 0.0) continue;
          const int t = (*arg)(i, c);
          const int j = (*graph_ptr)[static_cast<size_t>(i)][static_cast<size_t>(t)];
          const Eigen::RowVector3d u = unit_dirs->row(i * k + t);
          const double cosv = u.dot(dhat);
          gT(j, c) += g * cosv;
          // d cos(u, d)/dd = (u - (u.dhat) dhat) / |d|
          gdir += g * tval(j, c) * (u - cosv * dhat) / dnorm;
        }
      if (node.parents[0]->requires_grad) node.parents[0]->ensure_grad() += gT;
      if (node.parents[1]->requires_grad) node.parents[1]->ensure_grad().row(0) += gdir;
    }));
    result = ad::add(result, term);
  }
  return result;
}

InvariantEncoder::InvariantEncoder(nn::ParamStore& store, const std::string& name,
                                   const EncoderConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  int in_dim = 1;
  for (size_t l = 0; l < cfg_.level_widths.size(); ++l) {
    layers_.emplace_back(store, name + ".conv" + std::to_string(l), in_dim, cfg_.level_widths[l],
                         cfg_.kernel_support, rng);
    in_dim = cfg_.level_widths[l];
  }
}

FeaturePyramid InvariantEncoder::encode(const PointCloud& pc) const {
  if (pc.size() < 32) throw Error(ErrorCode::TooFewPoints, "encoder needs at least 32 points");
  const Eigen::Index n = pc.size();

  FeaturePyramid pyr;
  MatX3 pts = pc.points;
  std::vector<int> indices(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) indices[static_cast<size_t>(i)] = static_cast<int>(i);
  // Geometry-only input: constant ones keep the features free of absolute
  // coordinates.
  ad::Var feats = ad::constant(Mat::Ones(n, 1));

  for (size_t l = 0; l < layers_.size(); ++l) {
    if (l > 0) {
      const int target = std::max(1, static_cast<int>(std::llround(
                                          static_cast<double>(n) * cfg_.downsample_ratios[l])));
      const auto keep = farthest_point_sample(pts, std::min<int>(target, static_cast<int>(pts.rows())));
      MatX3 sub(static_cast<Eigen::Index>(keep.size()), 3);
      std::vector<int> sub_idx(keep.size());
      for (size_t i = 0; i < keep.size(); ++i) {
        sub.row(static_cast<Eigen::Index>(i)) = pts.row(keep[i]);
        sub_idx[i] = indices[static_cast<size_t>(keep[i])];
      }
      feats = ad::gather_rows(feats, keep);
      pts = std::move(sub);
      indices = std::move(sub_idx);
    }
    const int k = std::min<int>(cfg_.neighbors_k, static_cast<int>(pts.rows()) - 1);
    const auto graph = build_knn_graph(PointCloud(pts), k);
    feats = ad::leaky_relu(layers_[l].forward(pts, graph, feats));
    pyr.levels.push_back(PyramidLevel{feats, indices, pts});
  }
  pyr.global_feature = ad::max_over_rows(pyr.levels.back().features);
  return pyr;
}

}  // namespace catpose
