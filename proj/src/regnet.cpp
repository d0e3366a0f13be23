#include "catpose/regnet.hpp"

#include <algorithm>
#include <cmath>

#include "catpose/geometry.hpp"

namespace catpose {

void RegNetConfig::validate() const {
  if (sa_points.size() != sa_widths.size() || sa_points.empty())
    throw Error(ErrorCode::InvalidConfig, "sa_points and sa_widths must match");
  if (feature_dim < 1 || input_width < 1 || sa_neighbors < 1)
    throw Error(ErrorCode::InvalidConfig, "bad registration network dims");
  if (correspondence.top_k < 1 || correspondence.groups_train < 1 ||
      correspondence.group_size_train < 1 || correspondence.groups_test < 1 ||
      correspondence.group_size_test < 1)
    throw Error(ErrorCode::InvalidConfig, "bad correspondence counts");
}

std::vector<std::vector<int>> split_groups(int count, int groups, int group_size, uint64_t seed) {
  if (count < 1) throw Error(ErrorCode::EmptySet, "no correspondences to split");
  std::vector<std::vector<int>> out(static_cast<size_t>(groups));
  const int take = std::min(group_size, count);
  for (int g = 0; g < groups; ++g) {
    Rng rng = Rng(seed).fork(static_cast<uint64_t>(g) + 1);
    out[static_cast<size_t>(g)] = rng.sample_without_replacement(count, take);
  }
  return out;
}

SimilarityTransform umeyama_fit(const MatX3& source, const MatX3& target, double* residual) {
  ad::UmeyamaFit fit = ad::umeyama_fit_diff(ad::constant(source), ad::constant(target),
                                            ad::constant(Mat::Ones(source.rows(), 1)));
  if (residual) *residual = fit.residual;
  return fit.transform();
}

RegNet::RegNet(const RegNetConfig& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  input_mlp_ = nn::Mlp(store_, "input", {3, cfg_.input_width}, rng);
  int in = cfg_.input_width;
  for (size_t l = 0; l < cfg_.sa_points.size(); ++l) {
    sa_mlps_.emplace_back(store_, "sa" + std::to_string(l),
                          std::vector<int>{in + 3, cfg_.sa_widths[l]}, rng);
    in = cfg_.sa_widths[l];
  }
  const int bottleneck = cfg_.sa_widths.back();
  self_block_ = AttentionBlock(store_, "self", bottleneck, bottleneck, cfg_.attention, rng);
  cross_block_ = AttentionBlock(store_, "cross", bottleneck, bottleneck, cfg_.attention, rng);
  // Feature propagation back up the hierarchy, deepest first.
  int carried = bottleneck;
  for (size_t l = cfg_.sa_points.size(); l-- > 0;) {
    const int skip = l == 0 ? cfg_.input_width : cfg_.sa_widths[l - 1];
    const int out = l == 0 ? cfg_.feature_dim : cfg_.sa_widths[l - 1];
    fp_mlps_.emplace_back(store_, "fp" + std::to_string(l), std::vector<int>{carried + skip, out},
                          rng);
    carried = out;
  }
}

namespace {

MatX3 normalize_cloud(const MatX3& pts) {
  const Eigen::RowVector3d centroid = pts.colwise().mean();
  MatX3 centered = pts.rowwise() - centroid;
  const double radius = std::max(centered.rowwise().norm().mean(), 1e-9);
  return centered / radius;
}

// Neighbor indices of each center among source points (Euclidean, ties by
// ascending index).
std::vector<std::vector<int>> center_neighbors(const MatX3& centers, const MatX3& source, int k) {
  std::vector<std::vector<int>> out(static_cast<size_t>(centers.rows()));
  std::vector<std::pair<double, int>> dist(static_cast<size_t>(source.rows()));
  for (Eigen::Index i = 0; i < centers.rows(); ++i) {
    for (Eigen::Index j = 0; j < source.rows(); ++j)
      dist[static_cast<size_t>(j)] = {(centers.row(i) - source.row(j)).squaredNorm(),
                                      static_cast<int>(j)};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    out[static_cast<size_t>(i)].resize(static_cast<size_t>(k));
    for (int t = 0; t < k; ++t) out[static_cast<size_t>(i)][static_cast<size_t>(t)] = dist[static_cast<size_t>(t)].second;
  }
  return out;
}

void interp_3nn(const MatX3& targets, const MatX3& sources, std::vector<std::vector<int>>& idx,
                std::vector<std::vector<double>>& w) {
  const int kn = std::min<int>(3, static_cast<int>(sources.rows()));
  idx.assign(static_cast<size_t>(targets.rows()), {});
  w.assign(static_cast<size_t>(targets.rows()), {});
  std::vector<std::pair<double, int>> d(static_cast<size_t>(sources.rows()));
  for (Eigen::Index i = 0; i < targets.rows(); ++i) {
    for (Eigen::Index j = 0; j < sources.rows(); ++j)
      d[static_cast<size_t>(j)] = {(targets.row(i) - sources.row(j)).squaredNorm(), static_cast<int>(j)};
    std::partial_sort(d.begin(), d.begin() + kn, d.end());
    double total = 0.0;
    for (int t = 0; t < kn; ++t) {
      const double inv = 1.0 / std::max(std::sqrt(d[static_cast<size_t>(t)].first), 1e-12);
      idx[static_cast<size_t>(i)].push_back(d[static_cast<size_t>(t)].second);
      w[static_cast<size_t>(i)].push_back(inv);
      total += inv;
    }
    for (double& x : w[static_cast<size_t>(i)]) x /= total;
  }
}

}  // namespace

RegNet::CloudState RegNet::encode_levels(const MatX3& normalized_points) const {
  CloudState state;
  state.points.push_back(normalized_points);
  state.features.push_back(
      ad::leaky_relu(input_mlp_.forward(ad::constant(normalized_points))));

  for (size_t l = 0; l < sa_mlps_.size(); ++l) {
    const MatX3& src = state.points.back();
    const ad::Var& src_feats = state.features.back();
    const int n_centers = std::min<int>(cfg_.sa_points[l], static_cast<int>(src.rows()));
    const auto keep = farthest_point_sample(src, n_centers);
    MatX3 centers(n_centers, 3);
    for (int i = 0; i < n_centers; ++i) centers.row(i) = src.row(keep[static_cast<size_t>(i)]);

    const int k = std::min<int>(cfg_.sa_neighbors, static_cast<int>(src.rows()));
    const auto nbrs = center_neighbors(centers, src, k);

    std::vector<int> flat;
    Mat rel(static_cast<Eigen::Index>(n_centers) * k, 3);
    flat.reserve(static_cast<size_t>(n_centers) * static_cast<size_t>(k));
    for (int i = 0; i < n_centers; ++i)
      for (int t = 0; t < k; ++t) {
        const int j = nbrs[static_cast<size_t>(i)][static_cast<size_t>(t)];
        flat.push_back(j);
        rel.row(static_cast<Eigen::Index>(i) * k + t) = src.row(j) - centers.row(i);
      }
    ad::Var grouped = ad::concat_cols({ad::gather_rows(src_feats, flat), ad::constant(std::move(rel))});
    ad::Var pooled = ad::segment_rows_max(ad::leaky_relu(sa_mlps_[l].forward(grouped)), k);
    state.points.push_back(std::move(centers));
    state.features.push_back(pooled);
  }
  return state;
}

ad::Var RegNet::decode_levels(const CloudState& state, const ad::Var& bottleneck) const {
  ad::Var carried = bottleneck;
  for (size_t step = 0; step < fp_mlps_.size(); ++step) {
    const size_t level = state.points.size() - 1 - step;  // source level of carried features
    std::vector<std::vector<int>> idx;
    std::vector<std::vector<double>> w;
    interp_3nn(state.points[level - 1], state.points[level], idx, w);
    ad::Var up = ad::interp_rows(carried, std::move(idx), std::move(w));
    carried = ad::leaky_relu(
        fp_mlps_[step].forward(ad::concat_cols({up, state.features[level - 1]})));
  }
  return ad::l2_normalize_rows(carried);
}

std::pair<ad::Var, ad::Var> RegNet::extract_features(const PointCloud& model_pc,
                                                     const PointCloud& scene_pc) const {
  if (model_pc.size() < 32 || scene_pc.size() < 32)
    throw Error(ErrorCode::TooFewPoints, "feature extraction needs >= 32 points per cloud");

  const CloudState a = encode_levels(normalize_cloud(model_pc.points));
  const CloudState b = encode_levels(normalize_cloud(scene_pc.points));

  // Global self context, then symmetric cross context with shared weights.
  ad::Var sa = self_block_.forward(a.features.back(), a.features.back());
  ad::Var sb = self_block_.forward(b.features.back(), b.features.back());
  ad::Var ca = cross_block_.forward(sa, sb);
  ad::Var cb = cross_block_.forward(sb, sa);

  CloudState a2 = a, b2 = b;
  a2.features.back() = ca;
  b2.features.back() = cb;
  return {decode_levels(a2, ca), decode_levels(b2, cb)};
}

CorrespondenceSet RegNet::explore_correspondences(const ad::Var& model_feats,
                                                  const ad::Var& scene_feats,
                                                  const ad::Var& model_pts,
                                                  const ad::Var& scene_pts, int top_k) {
  if (scene_feats.rows() < 2)
    throw Error(ErrorCode::TooFewCandidates, "need at least 2 scene candidates for the ratio test");
  if (model_feats.rows() != model_pts.rows() || scene_feats.rows() != scene_pts.rows())
    throw Error(ErrorCode::ShapeMismatch, "feature/point counts inconsistent");

  // Cosine distances; descriptors are unit rows.
  ad::Var dist = ad::add_scalar(ad::scale(ad::matmul_nt(model_feats, scene_feats), -1.0), 1.0);
  const Mat& d = dist.value();
  const Eigen::Index n = d.rows();
  std::vector<std::pair<int, int>> first(static_cast<size_t>(n));   // (i, j1)
  std::vector<std::pair<int, int>> second(static_cast<size_t>(n));  // (i, j2)
  for (Eigen::Index i = 0; i < n; ++i) {
    int j1 = -1, j2 = -1;
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      if (j1 < 0 || d(i, j) < d(i, j1)) {
        j2 = j1;
        j1 = static_cast<int>(j);
      } else if (j2 < 0 || d(i, j) < d(i, j2)) {
        j2 = static_cast<int>(j);
      }
    }
    first[static_cast<size_t>(i)] = {static_cast<int>(i), j1};
    second[static_cast<size_t>(i)] = {static_cast<int>(i), j2};
  }
  ad::Var d1 = ad::gather_entries(dist, first);
  ad::Var d2 = ad::gather_entries(dist, second);
  ad::Var w_all = ad::ratio_weights(d1, d2);

  std::vector<int> order(static_cast<size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) order[static_cast<size_t>(i)] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return w_all.value()(a, 0) > w_all.value()(b, 0); });
  const int kept = std::min<int>(top_k, static_cast<int>(n));
  order.resize(static_cast<size_t>(kept));

  CorrespondenceSet set;
  set.model_idx = order;
  set.scene_idx.reserve(order.size());
  for (int i : order) set.scene_idx.push_back(first[static_cast<size_t>(i)].second);
  set.p = ad::gather_rows(model_pts, set.model_idx);
  set.q = ad::gather_rows(scene_pts, set.scene_idx);
  set.w = ad::gather_rows(w_all, set.model_idx);
  return set;
}

PoseEstimate RegNet::estimate_from_correspondences(const CorrespondenceSet& corrs, int groups,
                                                   int group_size, uint64_t seed) {
  if (corrs.size() == 0) throw Error(ErrorCode::EmptySet, "no correspondences");
  const auto group_idx = split_groups(static_cast<int>(corrs.size()), groups, group_size, seed);

  PoseEstimate best;
  bool found = false;
  for (size_t g = 0; g < group_idx.size(); ++g) {
    ad::Var pg = ad::gather_rows(corrs.p, group_idx[g]);
    ad::Var qg = ad::gather_rows(corrs.q, group_idx[g]);
    ad::Var wg = ad::gather_rows(corrs.w, group_idx[g]);
    try {
      // Ratio weights enter the fit so alignment gradients reach them; the
      // selection residual stays the unweighted squared loss.
      ad::UmeyamaFit fit = ad::umeyama_fit_diff(pg, qg, wg);
      best.group_residuals.push_back(fit.residual);
      if (!found || fit.residual < best.best_residual) {
        found = true;
        best.best_residual = fit.residual;
        best.best_group = static_cast<int>(g);
        best.scale_v = fit.scale;
        best.rotation_v = fit.rotation;
        best.translation_v = fit.translation;
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateConfiguration) throw;
      best.group_residuals.push_back(std::numeric_limits<double>::infinity());
    }
  }
  if (!found) throw Error(ErrorCode::AllGroupsDegenerate, "every group fit failed");
  best.transform.scale = ad::scalar(best.scale_v);
  best.transform.rotation = best.rotation_v.value();
  best.transform.translation = best.translation_v.value().row(0).transpose();
  best.correspondences = corrs;
  return best;
}

PoseEstimate RegNet::estimate_pose_scale(const PointCloud& model_pc, const PointCloud& scene_pc,
                                         bool training_split, uint64_t seed) const {
  auto [fm, fs] = extract_features(model_pc, scene_pc);
  CorrespondenceSet corrs =
      explore_correspondences(fm, fs, ad::constant(model_pc.points), ad::constant(scene_pc.points),
                              cfg_.correspondence.top_k);
  const int groups = training_split ? cfg_.correspondence.groups_train : cfg_.correspondence.groups_test;
  const int group_size =
      training_split ? cfg_.correspondence.group_size_train : cfg_.correspondence.group_size_test;
  return estimate_from_correspondences(corrs, groups, group_size, seed);
}

RegNet::LossVars RegNet::registration_loss(const ad::Var& lifted_pred, const PointCloud& scene_pc,
                                           const CorrespondenceSet& corrs,
                                           const PoseEstimate& estimate,
                                           const PoseLossWeights& w) {
  if (scene_pc.empty()) throw Error(ErrorCode::EmptyCloud, "scene cloud is empty");
  if (lifted_pred.rows() == 0) throw Error(ErrorCode::EmptyCloud, "rendered prediction is empty");

  LossVars out;
  out.geo = ad::chamfer(lifted_pred, ad::constant(scene_pc.points), ChamferReduction::Mean);
  ad::Var mapped = ad::apply_similarity_diff(estimate.scale_v, estimate.rotation_v,
                                             estimate.translation_v, corrs.p);
  ad::Var resid = ad::row_sqnorm(ad::sub(corrs.q, mapped));
  // Normalized by the actual pair count (K may have been clamped).
  out.w_corr = ad::scale(ad::sum_all(ad::mul(corrs.w, resid)),
                         1.0 / static_cast<double>(corrs.size()));
  out.total = ad::add(ad::scale(out.geo, w.lambda_geo), ad::scale(out.w_corr, w.lambda_w_corr));
  return out;
}

TrainCurve train_registration(RegNet& net, const std::vector<RegSample>& dataset,
                              const RegTrainConfig& tcfg, const PoseLossWeights& weights,
                              uint64_t seed, nn::Adam* optimizer, int start_epoch,
                              const std::function<void(int, double)>& on_epoch) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "no registration samples");
  nn::Adam local(tcfg.lr);
  nn::Adam& adam = optimizer ? *optimizer : local;

  TrainCurve curve;
  for (int epoch = start_epoch; epoch < tcfg.epochs; ++epoch) {
    adam.set_lr(tcfg.lr * std::pow(0.5, epoch / tcfg.halve_every));
    Rng erng = Rng(seed).fork(0x5e6 + static_cast<uint64_t>(epoch));
    std::vector<int> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    erng.shuffle(order);

    double total = 0.0;
    for (size_t step = 0; step < order.size(); ++step) {
      const RegSample& sample = dataset[static_cast<size_t>(order[step])];
      const uint64_t step_seed = Rng::splitmix(seed ^ 0xabcd ^ (static_cast<uint64_t>(epoch) << 24) ^ step);
      PoseEstimate est = net.estimate_pose_scale(sample.model_points, sample.scene_points,
                                                 /*training_split=*/true, step_seed);
      ad::Var cam_verts =
          ad::apply_similarity_diff(est.scale_v, est.rotation_v, est.translation_v,
                                    ad::constant(sample.model_mesh.vertices));
      ad::Var depth = ad_ops::render_depth_diff(sample.model_mesh.triangles, cam_verts, sample.camera);
      ad::Var lifted = ad_ops::lift_depth_diff(depth, sample.camera);

      ad::Var loss;
      if (lifted.rows() == 0) {
        // Object rendered outside the frame; only the correspondence term
        // can pull it back this step.
        ad::Var mapped = ad::apply_similarity_diff(est.scale_v, est.rotation_v, est.translation_v,
                                                   est.correspondences.p);
        ad::Var resid = ad::row_sqnorm(ad::sub(est.correspondences.q, mapped));
        loss = ad::scale(ad::sum_all(ad::mul(est.correspondences.w, resid)),
                         weights.lambda_w_corr / static_cast<double>(est.correspondences.size()));
      } else {
        loss = RegNet::registration_loss(lifted, sample.scene_points, est.correspondences, est,
                                         weights)
                   .total;
      }
      ad::backward(loss);
      adam.step(net.params());
      total += ad::scalar(loss);
    }
    curve.epoch_loss.push_back(total / static_cast<double>(dataset.size()));
    if (on_epoch) on_epoch(epoch, curve.epoch_loss.back());
  }
  return curve;
}

}  // namespace catpose
