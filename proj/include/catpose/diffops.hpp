#pragma once

#include "catpose/autodiff.hpp"
#include "catpose/geometry.hpp"
#include "catpose/types.hpp"

namespace catpose::ad {

// Differentiable chamfer between Nx3 and Mx3 point Vars.
Var chamfer(const Var& a, const Var& b, ChamferReduction reduction = ChamferReduction::Sum);

// Sum of squared umbrella-operator differences; `reference` is fixed,
// `deformed` carries gradients. Shared connectivity from `triangles`.
Var laplacian_loss_diff(const MatX3i& triangles, const MatX3& reference, const Var& deformed);

// Sum over edge-adjacent face pairs of (1 - cos of normals).
Var normal_consistency_diff(const MatX3i& triangles, const Var& vertices);

// Frozen face/barycentric records applied to a vertex Var (the sampling's
// differentiable path).
Var surface_samples_diff(const MatX3i& triangles, const std::vector<SurfaceSample>& samples,
                         const Var& vertices);

// Rows of `points` mapped by s*R*p + t. scale is 1x1, rotation 3x3, translation 1x3.
Var apply_similarity_diff(const Var& scale, const Var& rotation, const Var& translation,
                          const Var& points);

struct UmeyamaFit {
  Var scale;        // 1x1
  Var rotation;     // 3x3
  Var translation;  // 1x3
  double residual;  // attained unweighted squared loss

  SimilarityTransform transform() const;
};

// Closed-form weighted similarity fit, differentiable through the SVD.
// Unit weights recover the classic unweighted solution. Throws
// DegenerateConfiguration when the source covariance is rank-deficient
// (coincident or collinear source points).
UmeyamaFit umeyama_fit_diff(const Var& source, const Var& target, const Var& weights);

// Ratio-test weights 1 - d1/d2 from two gathered distance columns; zero (and
// no gradient) where d2 is below eps.
Var ratio_weights(const Var& d1, const Var& d2, double eps = 1e-12);

}  // namespace catpose::ad
