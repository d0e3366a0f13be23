#include "catpose/icp.hpp"

#include <algorithm>
#include <cmath>

#include "catpose/geometry.hpp"
#include "catpose/regnet.hpp"

namespace catpose {

void IcpConfig::validate() const {
  if (max_iterations < 1) throw Error(ErrorCode::InvalidConfig, "max_iterations must be >= 1");
  if (!(convergence_tol > 0.0)) throw Error(ErrorCode::InvalidConfig, "tolerance must be positive");
  if (reject_fraction < 0.0 || reject_fraction > 0.5)
    throw Error(ErrorCode::InvalidConfig, "reject_fraction must be in [0, 0.5]");
}

IcpResult icp_similarity(const PointCloud& source, const PointCloud& target,
                         const SimilarityTransform& init, const IcpConfig& cfg) {
  cfg.validate();
  if (source.size() < 3 || target.size() < 3)
    throw Error(ErrorCode::DegenerateConfiguration, "icp needs at least 3 points per cloud");

  IcpResult result;
  result.transform = init;
  const Eigen::Index n = source.size();

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const MatX3 moved = apply_similarity(result.transform, source.points);
    const auto match = nearest_indices(moved, target.points);

    std::vector<std::pair<double, int>> by_dist(static_cast<size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      by_dist[static_cast<size_t>(i)] = {(moved.row(i) - target.points.row(match[i])).squaredNorm(),
                                         static_cast<int>(i)};
    std::sort(by_dist.begin(), by_dist.end());
    const int kept = std::max<int>(3, static_cast<int>(std::llround(
                                          (1.0 - cfg.reject_fraction) * static_cast<double>(n))));

    MatX3 p(kept, 3), q(kept, 3);
    for (int i = 0; i < kept; ++i) {
      p.row(i) = source.points.row(by_dist[static_cast<size_t>(i)].second);
      q.row(i) = target.points.row(match[by_dist[static_cast<size_t>(i)].second]);
    }
    result.transform = umeyama_fit(p, q);

    double residual = 0.0;
    const MatX3 refit = apply_similarity(result.transform, p);
    for (int i = 0; i < kept; ++i) residual += (refit.row(i) - q.row(i)).squaredNorm();
    residual /= static_cast<double>(kept);
    result.residual_history.push_back(residual);

    if (result.residual_history.size() >= 2) {
      const double prev = result.residual_history[result.residual_history.size() - 2];
      if (std::abs(prev - residual) < cfg.convergence_tol * std::max(prev, 1e-12)) break;
    }
    if (residual < 1e-18) break;
  }
  return result;
}

SimilarityTransform refine_prediction(const PointCloud& rendered_pc, const PointCloud& scene_pc,
                                      const SimilarityTransform& init, const IcpConfig& cfg) {
  if (rendered_pc.empty()) throw Error(ErrorCode::EmptyCloud, "rendered cloud is empty");
  if (scene_pc.empty()) throw Error(ErrorCode::EmptyCloud, "scene cloud is empty");
  const IcpResult correction =
      icp_similarity(rendered_pc, scene_pc, SimilarityTransform::identity(), cfg);
  return compose(correction.transform, init);
}

}  // namespace catpose
