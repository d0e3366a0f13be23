#include "catpose/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "catpose/rng.hpp"

namespace catpose {

PointCloud apply_similarity(const SimilarityTransform& t, const PointCloud& pc) {
  if (pc.empty()) throw Error(ErrorCode::EmptyCloud, "apply_similarity on empty cloud");
  return PointCloud(apply_similarity(t, pc.points));
}

MatX3 apply_similarity(const SimilarityTransform& t, const MatX3& points) {
  MatX3 out = t.scale * (points * t.rotation.transpose());
  out.rowwise() += t.translation.transpose();
  return out;
}

SimilarityTransform invert_similarity(const SimilarityTransform& t) {
  SimilarityTransform inv;
  inv.scale = 1.0 / t.scale;
  inv.rotation = t.rotation.transpose();
  inv.translation = -(inv.scale) * (inv.rotation * t.translation);
  return inv;
}

SimilarityTransform compose(const SimilarityTransform& a, const SimilarityTransform& b) {
  SimilarityTransform c;
  c.scale = a.scale * b.scale;
  c.rotation = a.rotation * b.rotation;
  c.translation = a.scale * (a.rotation * b.translation) + a.translation;
  return c;
}

std::vector<int> nearest_indices(const MatX3& queries, const MatX3& points) {
  std::vector<int> out(queries.rows());
  for (Eigen::Index i = 0; i < queries.rows(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    int best_j = 0;
    for (Eigen::Index j = 0; j < points.rows(); ++j) {
      const double d = (queries.row(i) - points.row(j)).squaredNorm();
      if (d < best) {
        best = d;
        best_j = static_cast<int>(j);
      }
    }
    out[i] = best_j;
  }
  return out;
}

double chamfer_distance(const PointCloud& a, const PointCloud& b, ChamferReduction reduction) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyCloud, "chamfer_distance needs two nonempty clouds");
  double fwd = 0.0, bwd = 0.0;
  const auto ia = nearest_indices(a.points, b.points);
  const auto ib = nearest_indices(b.points, a.points);
  for (Eigen::Index i = 0; i < a.size(); ++i) fwd += (a.points.row(i) - b.points.row(ia[i])).squaredNorm();
  for (Eigen::Index j = 0; j < b.size(); ++j) bwd += (b.points.row(j) - a.points.row(ib[j])).squaredNorm();
  if (reduction == ChamferReduction::Mean) {
    fwd /= static_cast<double>(a.size());
    bwd /= static_cast<double>(b.size());
  }
  return fwd + bwd;
}

double quaternion_distance(const UnitQuaternion& q1, const UnitQuaternion& q2) {
  if (std::abs(q1.norm() - 1.0) > 1e-6 || std::abs(q2.norm() - 1.0) > 1e-6)
    throw Error(ErrorCode::NonUnitQuaternion, "quaternion_distance needs unit quaternions");
  const Eigen::Vector4d a(q1.w, q1.x, q1.y, q1.z);
  const Eigen::Vector4d b(q2.w, q2.x, q2.y, q2.z);
  return std::min((a - b).norm(), (a + b).norm());
}

double cosine_feature_distance(const Eigen::VectorXd& f, const Eigen::VectorXd& g) {
  if (f.size() != g.size()) throw Error(ErrorCode::ShapeMismatch, "feature lengths differ");
  const double nf = f.norm(), ng = g.norm();
  if (nf < 1e-12 || ng < 1e-12) throw Error(ErrorCode::ZeroVector, "cosine distance of zero vector");
  return 1.0 - f.dot(g) / (nf * ng);
}

double cloud_diameter(const PointCloud& pc) {
  if (pc.empty()) throw Error(ErrorCode::EmptyCloud, "diameter of empty cloud");
  MatX3 pts = pc.points;
  if (pts.rows() > 4096) {
    Rng rng(12345);
    MatX3 sub(4096, 3);
    for (int i = 0; i < 4096; ++i) sub.row(i) = pts.row(rng.uniform_int(static_cast<int>(pts.rows())));
    pts = sub;
  }
  double best = 0.0;
  for (Eigen::Index i = 0; i < pts.rows(); ++i)
    for (Eigen::Index j = i + 1; j < pts.rows(); ++j)
      best = std::max(best, (pts.row(i) - pts.row(j)).squaredNorm());
  return std::sqrt(best);
}

std::vector<int> farthest_rotation_sample(const std::vector<UnitQuaternion>& rotations, int k,
                                          uint64_t seed) {
  const int n = static_cast<int>(rotations.size());
  if (k < 1 || k > n) throw Error(ErrorCode::InvalidCount, "k must be in [1, len(rotations)]");
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  std::vector<int> selected{order[0]};
  std::vector<double> min_dist(n);
  for (int i = 0; i < n; ++i) min_dist[i] = quaternion_distance(rotations[i], rotations[order[0]]);
  while (static_cast<int>(selected.size()) < k) {
    int best = -1;
    double best_d = -1.0;
    for (int i = 0; i < n; ++i) {
      if (std::find(selected.begin(), selected.end(), i) != selected.end()) continue;
      if (min_dist[i] > best_d) {
        best_d = min_dist[i];
        best = i;
      }
    }
    selected.push_back(best);
    for (int i = 0; i < n; ++i)
      min_dist[i] = std::min(min_dist[i], quaternion_distance(rotations[i], rotations[best]));
  }
  return selected;
}

namespace {

bool lex_less(const Eigen::RowVector3d& a, const Eigen::RowVector3d& b) {
  for (int c = 0; c < 3; ++c) {
    if (a[c] < b[c]) return true;
    if (a[c] > b[c]) return false;
  }
  return false;
}

}  // namespace

std::vector<int> farthest_point_sample(const MatX3& points, int k) {
  const int n = static_cast<int>(points.rows());
  if (k < 1 || k > n) throw Error(ErrorCode::InvalidCount, "k must be in [1, n]");
  const Eigen::RowVector3d center = points.colwise().mean();
  int start = 0;
  double start_d = -1.0;
  for (int i = 0; i < n; ++i) {
    const double d = (points.row(i) - center).squaredNorm();
    if (d > start_d || (d == start_d && lex_less(points.row(i), points.row(start)))) {
      start_d = d;
      start = i;
    }
  }
  std::vector<int> selected{start};
  std::vector<double> min_dist(n);
  for (int i = 0; i < n; ++i) min_dist[i] = (points.row(i) - points.row(start)).squaredNorm();
  while (static_cast<int>(selected.size()) < k) {
    int best = -1;
    double best_d = -1.0;
    for (int i = 0; i < n; ++i) {
      if (min_dist[i] > best_d ||
          (best >= 0 && min_dist[i] == best_d && lex_less(points.row(i), points.row(best)))) {
        best_d = min_dist[i];
        best = i;
      }
    }
    selected.push_back(best);
    for (int i = 0; i < n; ++i)
      min_dist[i] = std::min(min_dist[i], (points.row(i) - points.row(best)).squaredNorm());
  }
  return selected;
}

PointCloud meanshift_outlier_filter(const PointCloud& pc, double bandwidth, int max_iterations,
                                    double tolerance) {
  if (pc.empty()) throw Error(ErrorCode::EmptyCloud, "meanshift filter on empty cloud");
  if (!(bandwidth > 0.0)) throw Error(ErrorCode::InvalidConfig, "bandwidth must be positive");
  const Eigen::Index n = pc.size();
  const double inv_two_h2 = 1.0 / (2.0 * bandwidth * bandwidth);
  // Kernel support cutoff at 3 bandwidths (weight < 1.2e-2 of peak).
  const double cutoff2 = 9.0 * bandwidth * bandwidth;

  MatX3 modes = pc.points;
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec3 y = modes.row(i).transpose();
    for (int it = 0; it < max_iterations; ++it) {
      Vec3 num = Vec3::Zero();
      double den = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        const double d2 = (pc.points.row(j).transpose() - y).squaredNorm();
        if (d2 > cutoff2) continue;
        const double w = std::exp(-d2 * inv_two_h2);
        num += w * pc.points.row(j).transpose();
        den += w;
      }
      if (den <= 0.0) break;
      const Vec3 next = num / den;
      const double shift = (next - y).norm();
      y = next;
      if (shift < tolerance) break;
    }
    modes.row(i) = y.transpose();
  }

  // Cluster modes within bandwidth/2 of an existing cluster center.
  std::vector<Vec3> centers;
  std::vector<int> label(n, -1);
  std::vector<int> count;
  const double merge2 = 0.25 * bandwidth * bandwidth;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 m = modes.row(i).transpose();
    for (size_t c = 0; c < centers.size(); ++c) {
      if ((m - centers[c]).squaredNorm() <= merge2) {
        label[i] = static_cast<int>(c);
        break;
      }
    }
    if (label[i] < 0) {
      centers.push_back(m);
      count.push_back(0);
      label[i] = static_cast<int>(centers.size()) - 1;
    }
    ++count[label[i]];
  }
  const int keep = static_cast<int>(std::max_element(count.begin(), count.end()) - count.begin());
  MatX3 out(count[keep], 3);
  int r = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (label[i] == keep) out.row(r++) = pc.points.row(i);
  return PointCloud(out);
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * ((b - a).cross(c - a)).norm();
}

MatX3 SampledSurface::positions(const TriangleMesh& mesh) const {
  MatX3 out(static_cast<Eigen::Index>(samples.size()), 3);
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    out.row(i) = s.b0 * mesh.vertices.row(mesh.triangles(s.face, 0)) +
                 s.b1 * mesh.vertices.row(mesh.triangles(s.face, 1)) +
                 s.b2 * mesh.vertices.row(mesh.triangles(s.face, 2));
  }
  return out;
}

SampledSurface sample_surface(const TriangleMesh& mesh, int n, uint64_t seed) {
  if (n < 1) throw Error(ErrorCode::InvalidCount, "sample count must be >= 1");
  mesh.validate();
  const Eigen::Index nf = mesh.face_count();
  std::vector<double> cdf(nf);
  double total = 0.0;
  for (Eigen::Index f = 0; f < nf; ++f) {
    total += triangle_area(mesh.vertices.row(mesh.triangles(f, 0)).transpose(),
                           mesh.vertices.row(mesh.triangles(f, 1)).transpose(),
                           mesh.vertices.row(mesh.triangles(f, 2)).transpose());
    cdf[f] = total;
  }
  if (total < 1e-12) throw Error(ErrorCode::ZeroAreaMesh, "mesh has no surface area");

  Rng rng(seed);
  SampledSurface out;
  out.samples.resize(n);
  out.cloud.points.resize(n, 3);
  for (int i = 0; i < n; ++i) {
    const double r = rng.uniform() * total;
    const int face = static_cast<int>(std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin());
    const double u = rng.uniform(), v = rng.uniform();
    const double su = std::sqrt(u);
    SurfaceSample s{std::min(face, static_cast<int>(nf) - 1), 1.0 - su, su * (1.0 - v), su * v};
    out.samples[i] = s;
  }
  out.cloud.points = out.positions(mesh);
  return out;
}

std::vector<std::vector<int>> vertex_adjacency(const TriangleMesh& mesh) {
  std::vector<std::vector<int>> adj(mesh.vertex_count());
  auto link = [&](int a, int b) {
    if (std::find(adj[a].begin(), adj[a].end(), b) == adj[a].end()) adj[a].push_back(b);
  };
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    const int a = mesh.triangles(f, 0), b = mesh.triangles(f, 1), c = mesh.triangles(f, 2);
    link(a, b); link(b, a);
    link(b, c); link(c, b);
    link(a, c); link(c, a);
  }
  return adj;
}

std::vector<std::pair<int, int>> edge_adjacent_faces(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, std::vector<int>> edges;
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    for (int e = 0; e < 3; ++e) {
      int a = mesh.triangles(f, e), b = mesh.triangles(f, (e + 1) % 3);
      if (a > b) std::swap(a, b);
      edges[{a, b}].push_back(static_cast<int>(f));
    }
  }
  std::vector<std::pair<int, int>> pairs;
  for (const auto& [edge, faces] : edges)
    for (size_t i = 0; i < faces.size(); ++i)
      for (size_t j = i + 1; j < faces.size(); ++j) pairs.emplace_back(faces[i], faces[j]);
  return pairs;
}

MatX3 mesh_laplacian(const TriangleMesh& mesh) {
  const auto adj = vertex_adjacency(mesh);
  MatX3 out(mesh.vertex_count(), 3);
  for (Eigen::Index i = 0; i < mesh.vertex_count(); ++i) {
    if (adj[i].empty())
      throw Error(ErrorCode::IsolatedVertex, "vertex " + std::to_string(i) + " has no neighbors");
    Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
    for (int j : adj[i]) mean += mesh.vertices.row(j);
    out.row(i) = mesh.vertices.row(i) - mean / static_cast<double>(adj[i].size());
  }
  return out;
}

double laplacian_loss(const TriangleMesh& m, const TriangleMesh& m_star) {
  if (m.triangles.rows() != m_star.triangles.rows() || m.triangles != m_star.triangles)
    throw Error(ErrorCode::ConnectivityMismatch, "meshes have different connectivity");
  const MatX3 la = mesh_laplacian(m);
  const MatX3 lb = mesh_laplacian(m_star);
  return (la - lb).rowwise().squaredNorm().sum();
}

MatX3 face_normals(const TriangleMesh& mesh) {
  MatX3 out(mesh.face_count(), 3);
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f) {
    const Vec3 a = mesh.vertices.row(mesh.triangles(f, 0)).transpose();
    const Vec3 b = mesh.vertices.row(mesh.triangles(f, 1)).transpose();
    const Vec3 c = mesh.vertices.row(mesh.triangles(f, 2)).transpose();
    const Vec3 cross = (b - a).cross(c - a);
    const double area = 0.5 * cross.norm();
    if (area < 1e-12)
      throw Error(ErrorCode::DegenerateFace, "face " + std::to_string(f) + " area below 1e-12");
    out.row(f) = (cross / cross.norm()).transpose();
  }
  return out;
}

double normal_consistency_loss(const TriangleMesh& mesh) {
  const MatX3 normals = face_normals(mesh);
  double loss = 0.0;
  for (const auto& [f0, f1] : edge_adjacent_faces(mesh))
    loss += 1.0 - normals.row(f0).dot(normals.row(f1));
  return loss;
}

Mat3 rotation_x(double radians) {
  return Eigen::AngleAxisd(radians, Vec3::UnitX()).toRotationMatrix();
}
Mat3 rotation_y(double radians) {
  return Eigen::AngleAxisd(radians, Vec3::UnitY()).toRotationMatrix();
}
Mat3 rotation_z(double radians) {
  return Eigen::AngleAxisd(radians, Vec3::UnitZ()).toRotationMatrix();
}

Mat3 random_rotation(Rng& rng) {
  // Shoemake's uniform quaternion construction.
  const double u1 = rng.uniform(), u2 = rng.uniform(), u3 = rng.uniform();
  const double a = std::sqrt(1.0 - u1), b = std::sqrt(u1);
  const double t2 = 2.0 * std::numbers::pi * u2, t3 = 2.0 * std::numbers::pi * u3;
  return Eigen::Quaterniond(a * std::sin(t2), a * std::cos(t2), b * std::sin(t3), b * std::cos(t3))
      .normalized()
      .toRotationMatrix();
}

}  // namespace catpose
