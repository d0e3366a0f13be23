#include "catpose/diffops.hpp"

#include <cmath>

namespace catpose::ad {

Var chamfer(const Var& a, const Var& b, ChamferReduction reduction) {
  if (a.rows() == 0 || b.rows() == 0) throw Error(ErrorCode::EmptyCloud, "chamfer on empty cloud");
  if (a.cols() != 3 || b.cols() != 3) throw Error(ErrorCode::ShapeMismatch, "chamfer needs Nx3");
  const MatX3 av = a.value(), bv = b.value();
  auto ia = std::make_shared<std::vector<int>>(nearest_indices(av, bv));
  auto ib = std::make_shared<std::vector<int>>(nearest_indices(bv, av));
  const double wa = reduction == ChamferReduction::Mean ? 1.0 / static_cast<double>(av.rows()) : 1.0;
  const double wb = reduction == ChamferReduction::Mean ? 1.0 / static_cast<double>(bv.rows()) : 1.0;
  double loss = 0.0;
  for (Eigen::Index i = 0; i < av.rows(); ++i) loss += wa * (av.row(i) - bv.row((*ia)[i])).squaredNorm();
  for (Eigen::Index j = 0; j < bv.rows(); ++j) loss += wb * (bv.row(j) - av.row((*ib)[j])).squaredNorm();
  Mat v(1, 1);
  v(0, 0) = loss;
  return Var(make_node(std::move(v), {a.node(), b.node()}, [ia, ib, wa, wb](Node& n) {
    const double g = n.grad(0, 0);
    const Mat& av = n.parents[0]->value;
    const Mat& bv = n.parents[1]->value;
    Mat ga = Mat::Zero(av.rows(), 3), gb = Mat::Zero(bv.rows(), 3);
    for (Eigen::Index i = 0; i < av.rows(); ++i) {
      const Eigen::RowVector3d d = 2.0 * wa * g * (av.row(i) - bv.row((*ia)[i]));
      ga.row(i) += d;
      gb.row((*ia)[i]) -= d;
    }
    for (Eigen::Index j = 0; j < bv.rows(); ++j) {
      const Eigen::RowVector3d d = 2.0 * wb * g * (bv.row(j) - av.row((*ib)[j]));
      gb.row(j) += d;
      ga.row((*ib)[j]) -= d;
    }
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad() += ga;
    if (n.parents[1]->requires_grad) n.parents[1]->ensure_grad() += gb;
  }));
}

Var laplacian_loss_diff(const MatX3i& triangles, const MatX3& reference, const Var& deformed) {
  TriangleMesh probe{reference, triangles};
  const auto adj = vertex_adjacency(probe);
  const MatX3 ref_lap = mesh_laplacian(probe);
  const Mat& def = deformed.value();
  if (def.rows() != reference.rows())
    throw Error(ErrorCode::ConnectivityMismatch, "vertex counts differ");

  auto adj_ptr = std::make_shared<std::vector<std::vector<int>>>(adj);
  MatX3 diff(def.rows(), 3);
  for (Eigen::Index i = 0; i < def.rows(); ++i) {
    Eigen::RowVector3d mean = Eigen::RowVector3d::Zero();
    for (int j : adj[static_cast<size_t>(i)]) mean += def.row(j);
    mean /= static_cast<double>(adj[static_cast<size_t>(i)].size());
    diff.row(i) = (def.row(i) - mean) - ref_lap.row(i);
  }
  Mat v(1, 1);
  v(0, 0) = diff.rowwise().squaredNorm().sum();
  auto diff_ptr = std::make_shared<MatX3>(std::move(diff));
  return Var(make_node(std::move(v), {deformed.node()}, [adj_ptr, diff_ptr](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    const double g = n.grad(0, 0);
    Mat& grad = n.parents[0]->ensure_grad();
    // d/dv of sum |L v - c|^2 is 2 L^T (L v - c) with L the umbrella operator.
    for (Eigen::Index i = 0; i < diff_ptr->rows(); ++i) {
      const Eigen::RowVector3d r = 2.0 * g * diff_ptr->row(i);
      grad.row(i) += r;
      const auto& nbrs = (*adj_ptr)[static_cast<size_t>(i)];
      const double w = 1.0 / static_cast<double>(nbrs.size());
      for (int j : nbrs) grad.row(j) -= w * r;
    }
  }));
}

Var normal_consistency_diff(const MatX3i& triangles, const Var& vertices) {
  TriangleMesh probe{vertices.value(), triangles};
  const auto pairs = edge_adjacent_faces(probe);
  const MatX3& verts = probe.vertices;

  const Eigen::Index nf = triangles.rows();
  MatX3 cross(nf, 3);
  Eigen::VectorXd cross_norm(nf);
  MatX3 normals(nf, 3);
  for (Eigen::Index f = 0; f < nf; ++f) {
    const Vec3 a = verts.row(triangles(f, 0)).transpose();
    const Vec3 b = verts.row(triangles(f, 1)).transpose();
    const Vec3 c = verts.row(triangles(f, 2)).transpose();
    const Vec3 cr = (b - a).cross(c - a);
    cross.row(f) = cr.transpose();
    cross_norm[f] = cr.norm();
    if (cross_norm[f] < 2e-12)
      throw Error(ErrorCode::DegenerateFace, "face " + std::to_string(f) + " is degenerate");
    normals.row(f) = cr.transpose() / cross_norm[f];
  }
  double loss = 0.0;
  for (const auto& [f0, f1] : pairs) loss += 1.0 - normals.row(f0).dot(normals.row(f1));

  Mat v(1, 1);
  v(0, 0) = loss;
  auto pairs_ptr = std::make_shared<std::vector<std::pair<int, int>>>(pairs);
  auto tri_ptr = std::make_shared<MatX3i>(triangles);
  auto cross_ptr = std::make_shared<MatX3>(std::move(cross));
  auto norm_ptr = std::make_shared<Eigen::VectorXd>(std::move(cross_norm));
  auto normals_ptr = std::make_shared<MatX3>(std::move(normals));
  return Var(make_node(std::move(v), {vertices.node()},
                       [pairs_ptr, tri_ptr, cross_ptr, norm_ptr, normals_ptr](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    const double g = n.grad(0, 0);
    const Mat& verts = n.parents[0]->value;
    const MatX3i& tris = *tri_ptr;
    // Accumulate gradient w.r.t. each unit normal first.
    MatX3 gn = MatX3::Zero(tris.rows(), 3);
    for (const auto& [f0, f1] : *pairs_ptr) {
      gn.row(f0) -= g * normals_ptr->row(f1);
      gn.row(f1) -= g * normals_ptr->row(f0);
    }
    Mat& grad = n.parents[0]->ensure_grad();
    for (Eigen::Index f = 0; f < tris.rows(); ++f) {
      if (gn.row(f).isZero(0.0)) continue;
      const Vec3 nrm = normals_ptr->row(f).transpose();
      // dL/dcross = (I - n n^T)/|cross| * dL/dn
      const Vec3 gc = (gn.row(f).transpose() - nrm * nrm.dot(gn.row(f).transpose())) / (*norm_ptr)[f];
      const Vec3 a = verts.row(tris(f, 0)).transpose();
      const Vec3 b = verts.row(tris(f, 1)).transpose();
      const Vec3 c = verts.row(tris(f, 2)).transpose();
      const Vec3 e1 = b - a, e2 = c - a;
      // cross = e1 x e2; d(cross)/de1 applied to gc is gc x e2... using
      // d<gc, e1 x e2>/de1 = e2 x gc and /de2 = gc x e1.
      const Vec3 g1 = e2.cross(gc);
      const Vec3 g2 = gc.cross(e1);
      grad.row(tris(f, 0)) += (-g1 - g2).transpose();
      grad.row(tris(f, 1)) += g1.transpose();
      grad.row(tris(f, 2)) += g2.transpose();
    }
  }));
}

Var surface_samples_diff(const MatX3i& triangles, const std::vector<SurfaceSample>& samples,
                         const Var& vertices) {
  std::vector<std::vector<int>> idx(samples.size());
  std::vector<std::vector<double>> w(samples.size());
  for (size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    idx[i] = {triangles(s.face, 0), triangles(s.face, 1), triangles(s.face, 2)};
    w[i] = {s.b0, s.b1, s.b2};
  }
  return interp_rows(vertices, std::move(idx), std::move(w));
}

Var apply_similarity_diff(const Var& scale_v, const Var& rotation, const Var& translation,
                          const Var& points) {
  Var rotated = matmul_nt(points, rotation);       // N x 3
  Var scaled = mul(rotated, scale_v);              // scalar broadcast
  return add(scaled, translation);                 // row broadcast
}

namespace {

// Shared forward state for the three umeyama outputs.
struct UmeyamaCore {
  Mat P, Q;             // n x 3
  Eigen::VectorXd w;    // n
  double W;
  Eigen::RowVector3d mu_p, mu_q;
  Mat X, Y;             // centered, n x 3
  Mat3 A;               // weighted cross covariance (target x source)
  double sigma_p2;
  Mat3 U, V;
  Vec3 D;
  Vec3 S;               // sign correction diag
  Mat3 R;
  double s;
  Eigen::RowVector3d T;
};

using CorePtr = std::shared_ptr<const UmeyamaCore>;

// Gradient of the full fit for one output's upstream gradient; gs/GR/gT may
// be zero. Returns grads for P, Q, w.
void umeyama_backward(const UmeyamaCore& c, double gs, const Mat3& GR,
                      const Eigen::RowVector3d& gT, Mat& gP, Mat& gQ, Eigen::VectorXd& gw) {
  const Eigen::Index n = c.P.rows();
  gP = Mat::Zero(n, 3);
  gQ = Mat::Zero(n, 3);
  gw = Eigen::VectorXd::Zero(n);

  // T = mu_q - s R mu_p
  Eigen::RowVector3d g_mu_q = gT;
  double g_s = gs;
  Mat3 g_R = GR;
  const Vec3 Rmu = c.R * c.mu_p.transpose();
  g_s += -gT.dot(Rmu.transpose());
  g_R += -c.s * gT.transpose() * c.mu_p;
  Eigen::RowVector3d g_mu_p = -c.s * (c.R.transpose() * gT.transpose()).transpose();

  // s = tr(diag(D) diag(S)) / sigma_p2
  Vec3 g_D = Vec3::Zero();
  double g_sigma = 0.0;
  const double trDS = c.D.dot(c.S);
  g_D += g_s * c.S / c.sigma_p2;
  g_sigma += -g_s * trDS / (c.sigma_p2 * c.sigma_p2);

  // R = U diag(S) V^T
  Mat3 g_U = g_R * c.V * c.S.asDiagonal();
  Mat3 g_V = g_R.transpose() * c.U * c.S.asDiagonal();

  // SVD backward: A = U diag(D) V^T.
  Mat3 F = Mat3::Zero();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) continue;
      const double denom = c.D[j] * c.D[j] - c.D[i] * c.D[i];
      // Near-equal singular values make the factor blow up; clamp to zero.
      F(i, j) = std::abs(denom) < 1e-6 ? 0.0 : 1.0 / denom;
    }
  const Mat3 UtgU = c.U.transpose() * g_U;
  const Mat3 VtgV = c.V.transpose() * g_V;
  const Mat3 inner = F.cwiseProduct(UtgU - UtgU.transpose()) * c.D.asDiagonal() +
                     c.D.asDiagonal() * F.cwiseProduct(VtgV - VtgV.transpose()) +
                     Mat3(g_D.asDiagonal());
  const Mat3 gA = c.U * inner * c.V.transpose();

  // A = (1/W) sum w_i y_i x_i^T ; sigma_p2 = (1/W) sum w_i |x_i|^2
  Mat gX = Mat::Zero(n, 3), gY = Mat::Zero(n, 3);
  const double traceAA = (gA.cwiseProduct(c.A)).sum();
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vec3 x = c.X.row(i).transpose();
    const Vec3 y = c.Y.row(i).transpose();
    gY.row(i) += (c.w[i] / c.W) * (gA * x).transpose();
    gX.row(i) += (c.w[i] / c.W) * (gA.transpose() * y).transpose();
    gw[i] += (y.dot(gA * x) - traceAA) / c.W;

    gX.row(i) += g_sigma * 2.0 * (c.w[i] / c.W) * c.X.row(i);
    gw[i] += g_sigma * (x.squaredNorm() - c.sigma_p2) / c.W;
  }

  // x_i = p_i - mu_p ; y_i = q_i - mu_q
  gP += gX;
  gQ += gY;
  g_mu_p += -gX.colwise().sum();
  g_mu_q += -gY.colwise().sum();

  // mu_p = sum w_i p_i / W
  for (Eigen::Index i = 0; i < n; ++i) {
    gP.row(i) += (c.w[i] / c.W) * g_mu_p;
    gQ.row(i) += (c.w[i] / c.W) * g_mu_q;
    gw[i] += ((c.P.row(i) - c.mu_p).dot(g_mu_p) + (c.Q.row(i) - c.mu_q).dot(g_mu_q)) / c.W;
  }
}

Var make_umeyama_output(Mat value, const Var& source, const Var& target, const Var& weights,
                        CorePtr core, int which) {
  return Var(make_node(std::move(value), {source.node(), target.node(), weights.node()},
                       [core, which](Node& n) {
    double gs = 0.0;
    Mat3 GR = Mat3::Zero();
    Eigen::RowVector3d gT = Eigen::RowVector3d::Zero();
    if (which == 0) gs = n.grad(0, 0);
    else if (which == 1) GR = n.grad;
    else gT = n.grad.row(0);
    Mat gP, gQ;
    Eigen::VectorXd gw;
    umeyama_backward(*core, gs, GR, gT, gP, gQ, gw);
    if (n.parents[0]->requires_grad) n.parents[0]->ensure_grad() += gP;
    if (n.parents[1]->requires_grad) n.parents[1]->ensure_grad() += gQ;
    if (n.parents[2]->requires_grad) n.parents[2]->ensure_grad() += gw;
  }));
}

}  // namespace

SimilarityTransform UmeyamaFit::transform() const {
  SimilarityTransform t;
  t.scale = ad::scalar(scale);
  t.rotation = rotation.value();
  t.translation = translation.value().row(0).transpose();
  return t;
}

UmeyamaFit umeyama_fit_diff(const Var& source, const Var& target, const Var& weights) {
  const Eigen::Index n = source.rows();
  if (n < 3) throw Error(ErrorCode::DegenerateConfiguration, "need at least 3 pairs");
  if (target.rows() != n || source.cols() != 3 || target.cols() != 3)
    throw Error(ErrorCode::ShapeMismatch, "umeyama inputs must be matching Nx3");
  if (weights.rows() != n || weights.cols() != 1)
    throw Error(ErrorCode::ShapeMismatch, "weights must be Nx1");

  auto core = std::make_shared<UmeyamaCore>();
  core->P = source.value();
  core->Q = target.value();
  core->w = weights.value().col(0);
  if ((core->w.array() < 0.0).any())
    throw Error(ErrorCode::InvalidConfig, "negative correspondence weight");
  core->W = core->w.sum();
  if (core->W <= 1e-12) throw Error(ErrorCode::DegenerateConfiguration, "all weights are zero");

  core->mu_p = (core->w.transpose() * core->P) / core->W;
  core->mu_q = (core->w.transpose() * core->Q) / core->W;
  core->X = core->P.rowwise() - core->mu_p;
  core->Y = core->Q.rowwise() - core->mu_q;
  core->A = Mat3::Zero();
  core->sigma_p2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    core->A += core->w[i] * core->Y.row(i).transpose() * core->X.row(i);
    core->sigma_p2 += core->w[i] * core->X.row(i).squaredNorm();
  }
  core->A /= core->W;
  core->sigma_p2 /= core->W;

  Eigen::JacobiSVD<Mat3> svd(core->A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  core->U = svd.matrixU();
  core->V = svd.matrixV();
  core->D = svd.singularValues();
  // Rank-deficient source spread (second singular value of the covariance
  // vanishing) leaves the rotation underdetermined.
  const double scale_ref = std::max(core->D[0], 1e-300);
  if (core->sigma_p2 < 1e-18 || core->D[1] / scale_ref < 1e-9 || core->D[0] < 1e-15)
    throw Error(ErrorCode::DegenerateConfiguration, "collinear or coincident source points");

  core->S = Vec3::Ones();
  if (core->U.determinant() * core->V.determinant() < 0.0) core->S[2] = -1.0;
  core->R = core->U * core->S.asDiagonal() * core->V.transpose();
  core->s = core->D.dot(core->S) / core->sigma_p2;
  if (!(core->s > 0.0)) throw Error(ErrorCode::DegenerateConfiguration, "non-positive fitted scale");
  core->T = core->mu_q - core->s * (core->R * core->mu_p.transpose()).transpose();

  double residual = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    residual +=
        (core->Q.row(i) - (core->s * (core->R * core->P.row(i).transpose()).transpose() + core->T))
            .squaredNorm();

  CorePtr cc = core;
  UmeyamaFit fit;
  Mat sv(1, 1);
  sv(0, 0) = core->s;
  fit.scale = make_umeyama_output(std::move(sv), source, target, weights, cc, 0);
  fit.rotation = make_umeyama_output(core->R, source, target, weights, cc, 1);
  fit.translation = make_umeyama_output(core->T, source, target, weights, cc, 2);
  fit.residual = residual;
  return fit;
}

Var ratio_weights(const Var& d1, const Var& d2, double eps) {
  if (d1.rows() != d2.rows() || d1.cols() != 1 || d2.cols() != 1)
    throw Error(ErrorCode::ShapeMismatch, "ratio_weights needs matching Nx1 columns");
  Var ratio = div_guarded(d1, d2, eps);
  Var w = add_scalar(scale(ratio, -1.0), 1.0);
  // Zero out rows where the guard fired (both distances ~0 means ambiguous).
  Mat mask(d1.rows(), 1);
  for (Eigen::Index i = 0; i < d1.rows(); ++i) mask(i, 0) = std::abs(d2.value()(i, 0)) <= eps ? 0.0 : 1.0;
  return mul(w, constant(std::move(mask)));
}

}  // namespace catpose::ad
