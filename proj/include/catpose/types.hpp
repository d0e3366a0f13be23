#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

namespace catpose {

using Mat = Eigen::MatrixXd;
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using MatX3i = Eigen::Matrix<int, Eigen::Dynamic, 3>;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

enum class ErrorCode {
  EmptyCloud,
  NonUnitQuaternion,
  InvalidCount,
  IsolatedVertex,
  ConnectivityMismatch,
  DegenerateFace,
  ZeroAreaMesh,
  ZeroVector,
  TooFewPoints,
  GraphMismatch,
  ShapeMismatch,
  LevelMismatch,
  FrameMismatch,
  TooFewCandidates,
  EmptySet,
  DegenerateConfiguration,
  AllGroupsDegenerate,
  NotVisible,
  TooFewViews,
  MalformedDataset,
  InvalidSpec,
  EmptyDataset,
  MissingCheckpoint,
  ArchitectureMismatch,
  CountMismatch,
  EmptyModel,
  InvalidMesh,
  InvalidConfig,
  IoFailure,
};

const char* error_category(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(error_category(code)) + ": " + message), code_(code) {}

  ErrorCode code() const { return code_; }
  const char* category() const { return error_category(code_); }

 private:
  ErrorCode code_;
};

struct PointCloud {
  MatX3 points;  // one row per point, meters

  PointCloud() = default;
  explicit PointCloud(MatX3 p) : points(std::move(p)) {}

  Eigen::Index size() const { return points.rows(); }
  bool empty() const { return points.rows() == 0; }
};

struct TriangleMesh {
  MatX3 vertices;    // one row per vertex, meters
  MatX3i triangles;  // vertex index triples, counterclockwise = outward

  Eigen::Index vertex_count() const { return vertices.rows(); }
  Eigen::Index face_count() const { return triangles.rows(); }

  // Enforces index bounds, non-degenerate triangles, minimum sizes.
  void validate() const;

  // Max pairwise vertex distance. Attained at vertices for polyhedra.
  double diameter() const;

  Vec3 centroid() const { return vertices.colwise().mean().transpose(); }
};

struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static SimilarityTransform identity() { return {}; }

  // scale > 0, rotation orthonormal with det +1 (1e-6 tolerances).
  void validate() const;

  Vec3 apply(const Vec3& p) const { return scale * (rotation * p) + translation; }
};

struct UnitQuaternion {
  double w = 1.0, x = 0.0, y = 0.0, z = 0.0;

  double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

  static UnitQuaternion from_rotation(const Mat3& r);
  Mat3 to_rotation() const;
};

}  // namespace catpose
