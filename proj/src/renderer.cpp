#include "catpose/renderer.hpp"

#include <algorithm>
#include <cmath>

#include "catpose/geometry.hpp"

namespace catpose {

namespace {

constexpr double kNearPlane = 1e-4;

struct PixelHit {
  int y, x;
  int face;
  double b0, b1, b2;  // screen-space barycentrics
  double z;
};

double edge2(double ax, double ay, double bx, double by, double cx, double cy) {
  return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
}

// Rasterizes camera-frame vertices, returning the z-buffer and per-pixel hits.
std::vector<PixelHit> rasterize(const MatX3& verts, const MatX3i& tris,
                                const CameraIntrinsics& cam, Mat& depth) {
  depth = Mat::Zero(cam.height, cam.width);
  std::vector<PixelHit> hits;
  Eigen::MatrixXi owner = Eigen::MatrixXi::Constant(cam.height, cam.width, -1);

  for (Eigen::Index f = 0; f < tris.rows(); ++f) {
    const Vec3 a = verts.row(tris(f, 0)).transpose();
    const Vec3 b = verts.row(tris(f, 1)).transpose();
    const Vec3 c = verts.row(tris(f, 2)).transpose();
    if (a.z() <= kNearPlane || b.z() <= kNearPlane || c.z() <= kNearPlane) continue;

    // Invisible back face: outward normal along the ray toward the face.
    const Vec3 normal = (b - a).cross(c - a);
    const Vec3 ray = (a + b + c) / 3.0;
    if (normal.dot(ray) >= 0.0) continue;

    const double p0x = cam.fx * a.x() / a.z() + cam.cx, p0y = cam.fy * a.y() / a.z() + cam.cy;
    const double p1x = cam.fx * b.x() / b.z() + cam.cx, p1y = cam.fy * b.y() / b.z() + cam.cy;
    const double p2x = cam.fx * c.x() / c.z() + cam.cx, p2y = cam.fy * c.y() / c.z() + cam.cy;
    const double denom = edge2(p0x, p0y, p1x, p1y, p2x, p2y);
    if (std::abs(denom) < 1e-14) continue;

    const int x_lo = std::max(0, static_cast<int>(std::ceil(std::min({p0x, p1x, p2x}))));
    const int x_hi = std::min(cam.width - 1, static_cast<int>(std::floor(std::max({p0x, p1x, p2x}))));
    const int y_lo = std::max(0, static_cast<int>(std::ceil(std::min({p0y, p1y, p2y}))));
    const int y_hi = std::min(cam.height - 1, static_cast<int>(std::floor(std::max({p0y, p1y, p2y}))));

    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double qx = static_cast<double>(x), qy = static_cast<double>(y);
        const double b0 = edge2(qx, qy, p1x, p1y, p2x, p2y) / denom;
        const double b1 = edge2(p0x, p0y, qx, qy, p2x, p2y) / denom;
        const double b2 = edge2(p0x, p0y, p1x, p1y, qx, qy) / denom;
        if (b0 < 0.0 || b1 < 0.0 || b2 < 0.0) continue;
        const double z = 1.0 / (b0 / a.z() + b1 / b.z() + b2 / c.z());
        if (depth(y, x) == 0.0 || z < depth(y, x)) {
          depth(y, x) = z;
          owner(y, x) = static_cast<int>(f);
        }
      }
    }
  }

  // Re-walk winners to emit one record per covered pixel.
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const int f = owner(y, x);
      if (f < 0) continue;
      const Vec3 a = verts.row(tris(f, 0)).transpose();
      const Vec3 b = verts.row(tris(f, 1)).transpose();
      const Vec3 c = verts.row(tris(f, 2)).transpose();
      const double p0x = cam.fx * a.x() / a.z() + cam.cx, p0y = cam.fy * a.y() / a.z() + cam.cy;
      const double p1x = cam.fx * b.x() / b.z() + cam.cx, p1y = cam.fy * b.y() / b.z() + cam.cy;
      const double p2x = cam.fx * c.x() / c.z() + cam.cx, p2y = cam.fy * c.y() / c.z() + cam.cy;
      const double denom = edge2(p0x, p0y, p1x, p1y, p2x, p2y);
      const double qx = static_cast<double>(x), qy = static_cast<double>(y);
      PixelHit h;
      h.y = y;
      h.x = x;
      h.face = f;
      h.b0 = edge2(qx, qy, p1x, p1y, p2x, p2y) / denom;
      h.b1 = edge2(p0x, p0y, qx, qy, p2x, p2y) / denom;
      h.b2 = edge2(p0x, p0y, p1x, p1y, qx, qy) / denom;
      h.z = depth(y, x);
      hits.push_back(h);
    }
  return hits;
}

}  // namespace

void CameraIntrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::InvalidConfig, "focal lengths must be positive");
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height)
    throw Error(ErrorCode::InvalidConfig, "principal point outside image");
  if (width < 1 || height < 1) throw Error(ErrorCode::InvalidConfig, "bad resolution");
}

DepthImage render_depth(const TriangleMesh& mesh, const SimilarityTransform& t,
                        const CameraIntrinsics& cam) {
  cam.validate();
  const MatX3 cam_verts = apply_similarity(t, mesh.vertices);
  Mat depth;
  rasterize(cam_verts, mesh.triangles, cam, depth);
  return DepthImage{std::move(depth)};
}

PointCloud lift_depth(const DepthImage& d, const CameraIntrinsics& cam) {
  std::vector<Vec3> pts;
  for (int v = 0; v < d.height(); ++v)
    for (int u = 0; u < d.width(); ++u) {
      const double z = d.values(v, u);
      if (z <= 0.0) continue;
      pts.emplace_back((u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z);
    }
  PointCloud pc;
  pc.points.resize(static_cast<Eigen::Index>(pts.size()), 3);
  for (size_t i = 0; i < pts.size(); ++i) pc.points.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
  return pc;
}

namespace ad_ops {

ad::Var render_depth_diff(const MatX3i& triangles, const ad::Var& cam_vertices,
                          const CameraIntrinsics& cam) {
  cam.validate();
  Mat depth;
  auto hits = std::make_shared<std::vector<PixelHit>>(
      rasterize(cam_vertices.value(), triangles, cam, depth));
  auto tris = std::make_shared<MatX3i>(triangles);
  return ad::Var(ad::make_node(std::move(depth), {cam_vertices.node()}, [hits, tris, cam](ad::Node& n) {
    if (!n.parents[0]->requires_grad) return;
    const Mat& verts = n.parents[0]->value;
    Mat& grad = n.parents[0]->ensure_grad();
    for (const PixelHit& h : *hits) {
      const double g = n.grad(h.y, h.x);
      if (g == 0.0) continue;
      const int i0 = (*tris)(h.face, 0), i1 = (*tris)(h.face, 1), i2 = (*tris)(h.face, 2);
      const Vec3 a = verts.row(i0).transpose();
      const Vec3 b = verts.row(i1).transpose();
      const Vec3 c = verts.row(i2).transpose();
      const double inv_z[3] = {1.0 / a.z(), 1.0 / b.z(), 1.0 / c.z()};
      const double bw[3] = {h.b0, h.b1, h.b2};
      const double z = h.z;

      // z = 1 / sum_k b_k / Z_k
      double gz_b[3], gz_Z[3];
      for (int k = 0; k < 3; ++k) {
        gz_b[k] = -z * z * inv_z[k];
        gz_Z[k] = z * z * bw[k] * inv_z[k] * inv_z[k];
      }

      const double p[3][2] = {
          {cam.fx * a.x() * inv_z[0] + cam.cx, cam.fy * a.y() * inv_z[0] + cam.cy},
          {cam.fx * b.x() * inv_z[1] + cam.cx, cam.fy * b.y() * inv_z[1] + cam.cy},
          {cam.fx * c.x() * inv_z[2] + cam.cx, cam.fy * c.y() * inv_z[2] + cam.cy}};
      const double qx = static_cast<double>(h.x), qy = static_cast<double>(h.y);
      const double denom = edge2(p[0][0], p[0][1], p[1][0], p[1][1], p[2][0], p[2][1]);

      // Derivatives of the numerators N_i and denominator D of the screen
      // barycentrics w.r.t. each projected vertex (x then y components).
      double dN[3][3][2] = {};  // dN[i][vertex][xy]
      // N0 = e(q, p1, p2)
      dN[0][1][0] = p[2][1] - qy;  dN[0][1][1] = -(p[2][0] - qx);
      dN[0][2][0] = -(p[1][1] - qy); dN[0][2][1] = p[1][0] - qx;
      // N1 = e(p0, q, p2)
      dN[1][0][0] = qy - p[2][1];  dN[1][0][1] = p[2][0] - qx;
      dN[1][2][0] = -(qy - p[0][1]); dN[1][2][1] = qx - p[0][0];
      // N2 = e(p0, p1, q)
      dN[2][0][0] = p[1][1] - qy;  dN[2][0][1] = qx - p[1][0];
      dN[2][1][0] = qy - p[0][1];  dN[2][1][1] = p[0][0] - qx;
      double dD[3][2];
      dD[0][0] = p[1][1] - p[2][1]; dD[0][1] = p[2][0] - p[1][0];
      dD[1][0] = p[2][1] - p[0][1]; dD[1][1] = p[0][0] - p[2][0];
      dD[2][0] = p[0][1] - p[1][1]; dD[2][1] = p[1][0] - p[0][0];

      // Accumulate dz/dp (projected coords) then chain through projection.
      const int vidx[3] = {i0, i1, i2};
      const double X[3] = {a.x(), b.x(), c.x()};
      const double Y[3] = {a.y(), b.y(), c.y()};
      for (int k = 0; k < 3; ++k) {
        double gpx = 0.0, gpy = 0.0;
        for (int i = 0; i < 3; ++i) {
          // db_i/dp_k = (dN_i/dp_k - b_i dD/dp_k) / D
          gpx += gz_b[i] * (dN[i][k][0] - bw[i] * dD[k][0]) / denom;
          gpy += gz_b[i] * (dN[i][k][1] - bw[i] * dD[k][1]) / denom;
        }
        const double gX = gpx * cam.fx * inv_z[k];
        const double gY = gpy * cam.fy * inv_z[k];
        const double gZ = gz_Z[k] - gpx * cam.fx * X[k] * inv_z[k] * inv_z[k] -
                          gpy * cam.fy * Y[k] * inv_z[k] * inv_z[k];
        grad(vidx[k], 0) += g * gX;
        grad(vidx[k], 1) += g * gY;
        grad(vidx[k], 2) += g * gZ;
      }
    }
  }));
}

ad::Var lift_depth_diff(const ad::Var& depth, const CameraIntrinsics& cam) {
  std::vector<std::pair<int, int>> pixels;  // (v, u)
  for (int v = 0; v < depth.rows(); ++v)
    for (int u = 0; u < depth.cols(); ++u)
      if (depth.value()(v, u) > 0.0) pixels.emplace_back(v, u);
  Mat pts(static_cast<Eigen::Index>(pixels.size()), 3);
  for (size_t i = 0; i < pixels.size(); ++i) {
    const auto [v, u] = pixels[i];
    const double z = depth.value()(v, u);
    pts.row(static_cast<Eigen::Index>(i)) << (u - cam.cx) * z / cam.fx, (v - cam.cy) * z / cam.fy, z;
  }
  auto pix = std::make_shared<std::vector<std::pair<int, int>>>(std::move(pixels));
  return ad::Var(ad::make_node(std::move(pts), {depth.node()}, [pix, cam](ad::Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Mat& g = n.parents[0]->ensure_grad();
    for (size_t i = 0; i < pix->size(); ++i) {
      const auto [v, u] = (*pix)[i];
      const auto r = static_cast<Eigen::Index>(i);
      g(v, u) += n.grad(r, 0) * (u - cam.cx) / cam.fx + n.grad(r, 1) * (v - cam.cy) / cam.fy +
                 n.grad(r, 2);
    }
  }));
}

}  // namespace ad_ops

}  // namespace catpose
