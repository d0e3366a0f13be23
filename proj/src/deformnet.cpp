#include "catpose/deformnet.hpp"

#include <cmath>

#include "catpose/diffops.hpp"

namespace catpose {

namespace {

// 3-NN inverse-distance interpolation weights from a subset back to all
// targets. Distance ratios only, so the weights inherit the encoder's
// shift/scale invariance.
void interpolation_weights(const MatX3& targets, const MatX3& sources,
                           std::vector<std::vector<int>>& idx,
                           std::vector<std::vector<double>>& w) {
  const int kn = std::min<int>(3, static_cast<int>(sources.rows()));
  idx.assign(static_cast<size_t>(targets.rows()), {});
  w.assign(static_cast<size_t>(targets.rows()), {});
  for (Eigen::Index i = 0; i < targets.rows(); ++i) {
    std::vector<std::pair<double, int>> d(static_cast<size_t>(sources.rows()));
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

ad::Var broadcast_rows(const ad::Var& row, Eigen::Index n) {
  return ad::matmul(ad::constant(Mat::Ones(n, 1)), row);
}

}  // namespace

DeformNet::DeformNet(const DeformNetConfig& cfg, uint64_t seed) : cfg_(cfg) {
  Rng rng(seed);
  encoder_ = InvariantEncoder(store_, "encoder", cfg_.encoder, rng);
  if (cfg_.use_cross_enhance)
    enhancer_ = CrossEnhancer(store_, "enhance", cfg_.encoder.level_widths, cfg_.attention, rng);

  int width_sum = 0;
  for (int w : cfg_.encoder.level_widths) width_sum += cfg_.use_cross_enhance ? 2 * w : w;
  const int global_w = cfg_.encoder.level_widths.back();
  std::vector<int> widths{width_sum + 2 * global_w};
  for (int w : cfg_.decoder_hidden) widths.push_back(w);
  widths.push_back(3);
  // Zero-initialized head: training starts at the identity deformation.
  decoder_ = nn::Mlp(store_, "decoder", widths, rng, /*zero_init_last=*/true);
}

DeformNet::Forward DeformNet::forward(const TriangleMesh& template_mesh,
                                      const PointCloud& scene) const {
  template_mesh.validate();
  if (scene.size() < 32) throw Error(ErrorCode::TooFewPoints, "scene needs at least 32 points");

  const FeaturePyramid mesh_pyr = encoder_.encode(PointCloud(template_mesh.vertices));
  const FeaturePyramid scene_pyr = encoder_.encode(scene);
  const FeaturePyramid used =
      cfg_.use_cross_enhance ? enhancer_.enhance(mesh_pyr, scene_pyr) : mesh_pyr;

  // Upsample every level back to the full vertex set and concatenate.
  const Eigen::Index nv = template_mesh.vertex_count();
  std::vector<ad::Var> parts;
  for (const auto& level : used.levels) {
    if (static_cast<Eigen::Index>(level.indices.size()) == nv) {
      parts.push_back(level.features);
      continue;
    }
    std::vector<std::vector<int>> idx;
    std::vector<std::vector<double>> w;
    interpolation_weights(template_mesh.vertices, level.points, idx, w);
    parts.push_back(ad::interp_rows(level.features, std::move(idx), std::move(w)));
  }
  parts.push_back(broadcast_rows(mesh_pyr.global_feature, nv));
  parts.push_back(broadcast_rows(scene_pyr.global_feature, nv));

  Forward out;
  out.offsets = decoder_.forward(ad::concat_cols(parts));
  out.deformed_vertices = ad::add(ad::constant(template_mesh.vertices), out.offsets);
  return out;
}

DeformationResult DeformNet::deform(const TriangleMesh& template_mesh,
                                    const PointCloud& scene) const {
  const Forward fwd = forward(template_mesh, scene);
  DeformationResult result;
  result.offsets = fwd.offsets.value();
  result.deformed_mesh.vertices = fwd.deformed_vertices.value();
  result.deformed_mesh.triangles = template_mesh.triangles;
  return result;
}

DeformLossBreakdown DeformNet::LossVars::values() const {
  return DeformLossBreakdown{ad::scalar(cd), ad::scalar(lpc), ad::scalar(nc), ad::scalar(total)};
}

DeformNet::LossVars DeformNet::deformation_loss(const Forward& fwd,
                                                const TriangleMesh& template_mesh,
                                                const PointCloud& coarse_target,
                                                const DeformLossWeights& w, int n_samples,
                                                uint64_t seed) const {
  if (coarse_target.empty()) throw Error(ErrorCode::EmptyCloud, "coarse target is empty");
  // Guards un-normalized supervision: the target must live in the template's
  // normalized frame.
  const double target_diam = cloud_diameter(coarse_target);
  const double ref_diam = template_mesh.diameter();
  if (std::abs(target_diam - ref_diam) > 0.5 * ref_diam)
    throw Error(ErrorCode::FrameMismatch,
                "coarse target diameter " + std::to_string(target_diam) +
                    " deviates more than 50% from normalized diameter " + std::to_string(ref_diam));

  TriangleMesh current{fwd.deformed_vertices.value(), template_mesh.triangles};
  const SampledSurface sampled = sample_surface(current, n_samples, seed);
  ad::Var p_d = ad::surface_samples_diff(template_mesh.triangles, sampled.samples,
                                         fwd.deformed_vertices);

  LossVars out;
  out.cd = ad::chamfer(ad::constant(coarse_target.points), p_d, cfg_.chamfer_reduction);
  out.lpc = ad::laplacian_loss_diff(template_mesh.triangles, template_mesh.vertices,
                                    fwd.deformed_vertices);
  out.nc = ad::normal_consistency_diff(template_mesh.triangles, fwd.deformed_vertices);
  out.total = ad::add(ad::add(ad::scale(out.cd, w.lambda_cd), ad::scale(out.lpc, w.lambda_lpc)),
                      ad::scale(out.nc, w.lambda_nc));
  return out;
}

TrainCurve train_deformation(DeformNet& net, const std::vector<DeformSample>& dataset,
                             const DeformTrainConfig& tcfg, const DeformLossWeights& weights,
                             uint64_t seed, nn::Adam* optimizer, int start_epoch,
                             const std::function<void(int, double)>& on_epoch) {
  if (dataset.empty()) throw Error(ErrorCode::EmptyDataset, "no deformation samples");
  nn::Adam local(tcfg.lr);
  nn::Adam& adam = optimizer ? *optimizer : local;

  TrainCurve curve;
  for (int epoch = start_epoch; epoch < tcfg.epochs; ++epoch) {
    adam.set_lr(tcfg.lr * std::pow(0.5, epoch / tcfg.halve_every));
    Rng erng = Rng(seed).fork(static_cast<uint64_t>(epoch));
    std::vector<int> order(dataset.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    erng.shuffle(order);

    double total = 0.0;
    for (size_t step = 0; step < order.size(); ++step) {
      const DeformSample& sample = dataset[static_cast<size_t>(order[step])];
      const uint64_t sample_seed = Rng::splitmix(seed ^ (static_cast<uint64_t>(epoch) << 20) ^ step);
      auto fwd = net.forward(sample.template_mesh, sample.scene);
      auto loss = net.deformation_loss(fwd, sample.template_mesh, sample.coarse_target, weights,
                                       net.config().n_samples, sample_seed);
      ad::backward(loss.total);
      adam.step(net.params());
      total += ad::scalar(loss.total);
    }
    curve.epoch_loss.push_back(total / static_cast<double>(dataset.size()));
    if (on_epoch) on_epoch(epoch, curve.epoch_loss.back());
  }
  return curve;
}

}  // namespace catpose
