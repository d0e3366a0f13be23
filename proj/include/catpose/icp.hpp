#pragma once

#include <vector>

#include "catpose/types.hpp"

namespace catpose {

struct IcpConfig {
  int max_iterations = 50;
  double convergence_tol = 1e-6;   // relative residual change
  double reject_fraction = 0.1;    // worst pairs dropped per iteration

  void validate() const;
};

struct IcpResult {
  SimilarityTransform transform;
  std::vector<double> residual_history;  // mean squared pair distance, non-increasing
};

// Similarity ICP: nearest-neighbor matching, worst-pair rejection, and a
// closed-form similarity fit per iteration (scale re-estimated every step).
IcpResult icp_similarity(const PointCloud& source, const PointCloud& target,
                         const SimilarityTransform& init, const IcpConfig& cfg);

// ICP between the rendered prediction and the scene, composed onto the
// initial pose estimate.
SimilarityTransform refine_prediction(const PointCloud& rendered_pc, const PointCloud& scene_pc,
                                      const SimilarityTransform& init, const IcpConfig& cfg);

}  // namespace catpose
