#pragma once

#include <cstdint>
#include <vector>

#include "catpose/types.hpp"

namespace catpose {

// ---- similarity transforms ----

PointCloud apply_similarity(const SimilarityTransform& t, const PointCloud& pc);
MatX3 apply_similarity(const SimilarityTransform& t, const MatX3& points);
SimilarityTransform invert_similarity(const SimilarityTransform& t);
// compose(a, b)(x) == a(b(x))
SimilarityTransform compose(const SimilarityTransform& a, const SimilarityTransform& b);

// ---- distances ----

enum class ChamferReduction { Sum, Mean };

// Bidirectional sum (or per-side mean) of squared nearest-neighbor distances.
double chamfer_distance(const PointCloud& a, const PointCloud& b,
                        ChamferReduction reduction = ChamferReduction::Sum);

// Index of the nearest row of `points` for each row of `queries`.
std::vector<int> nearest_indices(const MatX3& queries, const MatX3& points);

// min{|q1-q2|, |q1+q2|}; range [0, sqrt(2)].
double quaternion_distance(const UnitQuaternion& q1, const UnitQuaternion& q2);

// 1 - cos similarity; range [0, 2]. Throws ZeroVector on near-zero input.
double cosine_feature_distance(const Eigen::VectorXd& f, const Eigen::VectorXd& g);

// Max pairwise distance (subsampled above 4096 points).
double cloud_diameter(const PointCloud& pc);

// ---- sampling & selection ----

// Greedy max-min selection over the quaternion metric. The start element is
// index 0 of a seed-shuffled order; ties go to the lowest original index.
std::vector<int> farthest_rotation_sample(const std::vector<UnitQuaternion>& rotations, int k,
                                          uint64_t seed);

// Greedy Euclidean farthest-point subset. Permutation-invariant: starts from
// the point farthest from the centroid, ties broken lexicographically.
std::vector<int> farthest_point_sample(const MatX3& points, int k);

// Keeps the largest mean-shift mode (Gaussian kernel; modes merged within
// bandwidth/2). Output is a subset of the input points.
PointCloud meanshift_outlier_filter(const PointCloud& pc, double bandwidth,
                                    int max_iterations = 300, double tolerance = 1e-5);

struct SurfaceSample {
  int face;
  double b0, b1, b2;  // barycentric weights, nonneg, sum 1
};

struct SampledSurface {
  PointCloud cloud;
  std::vector<SurfaceSample> samples;

  // Re-evaluates sample positions for new vertex values (fixed convex
  // combinations, the differentiable path).
  MatX3 positions(const TriangleMesh& mesh) const;
};

// Area-weighted surface sampling, deterministic per seed.
SampledSurface sample_surface(const TriangleMesh& mesh, int n, uint64_t seed);

// ---- mesh operators ----

// 1-ring vertex neighbors derived from triangles.
std::vector<std::vector<int>> vertex_adjacency(const TriangleMesh& mesh);

// Unordered pairs of faces sharing an edge; boundary edges contribute nothing.
std::vector<std::pair<int, int>> edge_adjacent_faces(const TriangleMesh& mesh);

// Uniform umbrella operator: L(v_i) = v_i - mean of 1-ring neighbors.
MatX3 mesh_laplacian(const TriangleMesh& mesh);

// Sum of squared differences of the umbrella operators of two meshes with
// identical connectivity.
double laplacian_loss(const TriangleMesh& m, const TriangleMesh& m_star);

// Unit outward normals under counterclockwise winding. Throws DegenerateFace
// below 1e-12 m^2.
MatX3 face_normals(const TriangleMesh& mesh);

// Sum over edge-adjacent face pairs of (1 - cos of their normals).
double normal_consistency_loss(const TriangleMesh& mesh);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

Mat3 rotation_x(double radians);
Mat3 rotation_y(double radians);
Mat3 rotation_z(double radians);
Mat3 random_rotation(class Rng& rng);

}  // namespace catpose
