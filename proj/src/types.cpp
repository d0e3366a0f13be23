#include "catpose/types.hpp"

namespace catpose {

const char* error_category(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyCloud: return "EmptyCloud";
    case ErrorCode::NonUnitQuaternion: return "NonUnitQuaternion";
    case ErrorCode::InvalidCount: return "InvalidCount";
    case ErrorCode::IsolatedVertex: return "IsolatedVertex";
    case ErrorCode::ConnectivityMismatch: return "ConnectivityMismatch";
    case ErrorCode::DegenerateFace: return "DegenerateFace";
    case ErrorCode::ZeroAreaMesh: return "ZeroAreaMesh";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::GraphMismatch: return "GraphMismatch";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::LevelMismatch: return "LevelMismatch";
    case ErrorCode::FrameMismatch: return "FrameMismatch";
    case ErrorCode::TooFewCandidates: return "TooFewCandidates";
    case ErrorCode::EmptySet: return "EmptySet";
    case ErrorCode::DegenerateConfiguration: return "DegenerateConfiguration";
    case ErrorCode::AllGroupsDegenerate: return "AllGroupsDegenerate";
    case ErrorCode::NotVisible: return "NotVisible";
    case ErrorCode::TooFewViews: return "TooFewViews";
    case ErrorCode::MalformedDataset: return "MalformedDataset";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
    case ErrorCode::ArchitectureMismatch: return "ArchitectureMismatch";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::EmptyModel: return "EmptyModel";
    case ErrorCode::InvalidMesh: return "InvalidMesh";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "UnknownError";
}

void TriangleMesh::validate() const {
  if (vertices.rows() < 3) throw Error(ErrorCode::InvalidMesh, "mesh needs at least 3 vertices");
  if (triangles.rows() < 1) throw Error(ErrorCode::InvalidMesh, "mesh needs at least 1 triangle");
  const int nv = static_cast<int>(vertices.rows());
  for (Eigen::Index f = 0; f < triangles.rows(); ++f) {
    const int a = triangles(f, 0), b = triangles(f, 1), c = triangles(f, 2);
    if (a < 0 || a >= nv || b < 0 || b >= nv || c < 0 || c >= nv)
      throw Error(ErrorCode::InvalidMesh, "triangle " + std::to_string(f) + " index out of range");
    if (a == b || b == c || a == c)
      throw Error(ErrorCode::InvalidMesh, "triangle " + std::to_string(f) + " has repeated indices");
  }
  if (!vertices.allFinite()) throw Error(ErrorCode::InvalidMesh, "non-finite vertex coordinates");
}

double TriangleMesh::diameter() const {
  double best = 0.0;
  for (Eigen::Index i = 0; i < vertices.rows(); ++i)
    for (Eigen::Index j = i + 1; j < vertices.rows(); ++j)
      best = std::max(best, (vertices.row(i) - vertices.row(j)).squaredNorm());
  return std::sqrt(best);
}

void SimilarityTransform::validate() const {
  if (!(scale > 0.0)) throw Error(ErrorCode::InvalidConfig, "scale must be positive");
  const Mat3 gram = rotation * rotation.transpose();
  if ((gram - Mat3::Identity()).cwiseAbs().maxCoeff() >= 1e-6)
    throw Error(ErrorCode::InvalidConfig, "rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > 1e-6)
    throw Error(ErrorCode::InvalidConfig, "rotation determinant is not +1");
}

UnitQuaternion UnitQuaternion::from_rotation(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  return {q.w(), q.x(), q.y(), q.z()};
}

Mat3 UnitQuaternion::to_rotation() const {
  return Eigen::Quaterniond(w, x, y, z).normalized().toRotationMatrix();
}

}  // namespace catpose
