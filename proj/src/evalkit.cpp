#include "catpose/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "catpose/geometry.hpp"
#include "catpose/plot.hpp"

namespace catpose {

namespace {

using Polygon = std::vector<Vec3>;

struct Polyhedron {
  std::vector<Polygon> faces;  // convex polygons, outward winding
};

Polyhedron box_polyhedron(const OrientedBox& box) {
  const Vec3 h = 0.5 * box.extents;
  auto corner = [&](double sx, double sy, double sz) {
    return Vec3(box.center + box.rotation * Vec3(sx * h.x(), sy * h.y(), sz * h.z()));
  };
  const Vec3 c[8] = {corner(-1, -1, -1), corner(1, -1, -1), corner(1, 1, -1), corner(-1, 1, -1),
                     corner(-1, -1, 1),  corner(1, -1, 1),  corner(1, 1, 1),  corner(-1, 1, 1)};
  Polyhedron p;
  p.faces = {
      {c[0], c[3], c[2], c[1]},  // -z
      {c[4], c[5], c[6], c[7]},  // +z
      {c[0], c[1], c[5], c[4]},  // -y
      {c[2], c[3], c[7], c[6]},  // +y
      {c[1], c[2], c[6], c[5]},  // +x
      {c[0], c[4], c[7], c[3]},  // -x
  };
  return p;
}

// Keeps the half-space n.x <= d. The cap polygon is wound so its outward
// normal is n, preserving the signed-volume convention.
Polyhedron clip(const Polyhedron& poly, const Vec3& n, double d, double eps) {
  Polyhedron out;
  std::vector<Vec3> cap;
  for (const Polygon& face : poly.faces) {
    Polygon kept;
    const size_t m = face.size();
    for (size_t i = 0; i < m; ++i) {
      const Vec3& a = face[i];
      const Vec3& b = face[(i + 1) % m];
      const double da = n.dot(a) - d;
      const double db = n.dot(b) - d;
      if (da <= eps) kept.push_back(a);
      if ((da < -eps && db > eps) || (da > eps && db < -eps)) {
        const double t = da / (da - db);
        const Vec3 x = a + t * (b - a);
        kept.push_back(x);
        cap.push_back(x);
      }
    }
    if (kept.size() >= 3) out.faces.push_back(std::move(kept));
  }
  if (cap.size() >= 3) {
    // Deduplicate and order around the centroid in the plane.
    std::vector<Vec3> unique;
    for (const Vec3& p : cap) {
      bool dup = false;
      for (const Vec3& q : unique)
        if ((p - q).squaredNorm() < eps * eps) { dup = true; break; }
      if (!dup) unique.push_back(p);
    }
    if (unique.size() >= 3) {
      Vec3 centroid = Vec3::Zero();
      for (const Vec3& p : unique) centroid += p;
      centroid /= static_cast<double>(unique.size());
      const Vec3 u = (unique[0] - centroid).normalized();
      const Vec3 v = n.cross(u).normalized();
      std::sort(unique.begin(), unique.end(), [&](const Vec3& a, const Vec3& b) {
        const double ta = std::atan2(v.dot(a - centroid), u.dot(a - centroid));
        const double tb = std::atan2(v.dot(b - centroid), u.dot(b - centroid));
        return ta < tb;
      });
      // Sorting counterclockwise around +n gives outward normal +n.
      out.faces.push_back(std::move(unique));
    }
  }
  return out;
}

double volume(const Polyhedron& poly) {
  double six_v = 0.0;
  for (const Polygon& face : poly.faces)
    for (size_t i = 1; i + 1 < face.size(); ++i)
      six_v += face[0].dot(face[i].cross(face[i + 1]));
  return six_v / 6.0;
}

}  // namespace

std::vector<Vec3> OrientedBox::corners() const {
  const Vec3 h = 0.5 * extents;
  std::vector<Vec3> out;
  for (int sx : {-1, 1})
    for (int sy : {-1, 1})
      for (int sz : {-1, 1})
        out.push_back(center + rotation * Vec3(sx * h.x(), sy * h.y(), sz * h.z()));
  return out;
}

double iou3d(const OrientedBox& a, const OrientedBox& b) {
  const double scale = std::max(a.extents.maxCoeff(), b.extents.maxCoeff());
  const double eps = 1e-9 * std::max(scale, 1e-9);
  Polyhedron inter = box_polyhedron(a);
  // Clip by the six half-spaces of b.
  for (int axis = 0; axis < 3 && !inter.faces.empty(); ++axis) {
    const Vec3 n = b.rotation.col(axis);
    const double c = n.dot(b.center), h = 0.5 * b.extents[axis];
    inter = clip(inter, n, c + h, eps);
    if (inter.faces.empty()) break;
    inter = clip(inter, -n, -(c - h), eps);
  }
  const double vi = inter.faces.empty() ? 0.0 : std::max(0.0, volume(inter));
  const double vu = a.volume() + b.volume() - vi;
  if (vu <= 0.0) return 0.0;
  return std::clamp(vi / vu, 0.0, 1.0);
}

PoseError pose_error(const SimilarityTransform& pred, const SimilarityTransform& gt,
                     bool symmetric) {
  PoseError e;
  e.translation_cm = (pred.translation - gt.translation).norm() * 100.0;
  if (symmetric) {
    const Vec3 ap = pred.rotation * Vec3::UnitY();
    const Vec3 ag = gt.rotation * Vec3::UnitY();
    e.rotation_deg = std::acos(std::clamp(ap.dot(ag), -1.0, 1.0)) * 180.0 / std::numbers::pi;
  } else {
    const double tr = (pred.rotation.transpose() * gt.rotation).trace();
    e.rotation_deg = std::acos(std::clamp((tr - 1.0) / 2.0, -1.0, 1.0)) * 180.0 / std::numbers::pi;
  }
  return e;
}

double average_precision(const std::vector<PoseSizePrediction>& preds,
                         const std::vector<PoseSizePrediction>& gts,
                         const std::function<bool(const PoseSizePrediction&,
                                                  const PoseSizePrediction&)>& predicate) {
  if (preds.empty() || preds.size() != gts.size())
    throw Error(ErrorCode::CountMismatch, "need one prediction per ground-truth instance");
  int hits = 0;
  for (size_t i = 0; i < preds.size(); ++i)
    if (predicate(preds[i], gts[i])) ++hits;
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

double add_error(const SimilarityTransform& pred, const SimilarityTransform& gt,
                 const PointCloud& model_points, bool symmetric) {
  if (model_points.empty()) throw Error(ErrorCode::EmptyModel, "model points are empty");
  const MatX3 mp = apply_similarity(pred, model_points.points);
  const MatX3 mg = apply_similarity(gt, model_points.points);
  if (!symmetric) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < mp.rows(); ++i) total += (mp.row(i) - mg.row(i)).norm();
    return total / static_cast<double>(mp.rows());
  }
  const auto nn = nearest_indices(mp, mg);
  double total = 0.0;
  for (Eigen::Index i = 0; i < mp.rows(); ++i) total += (mp.row(i) - mg.row(nn[i])).norm();
  return total / static_cast<double>(mp.rows());
}

double add_auc(const std::vector<SimilarityTransform>& preds,
               const std::vector<SimilarityTransform>& gts, const PointCloud& model_points,
               bool symmetric, double max_threshold) {
  if (preds.empty() || preds.size() != gts.size())
    throw Error(ErrorCode::CountMismatch, "need one prediction per ground truth");
  if (model_points.empty()) throw Error(ErrorCode::EmptyModel, "model points are empty");
  // Exact area of the empirical accuracy-threshold step curve.
  double area = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) {
    const double e = add_error(preds[i], gts[i], model_points, symmetric);
    area += std::max(0.0, 1.0 - e / max_threshold);
  }
  return area / static_cast<double>(preds.size());
}

MetricReport compute_metric_report(const std::vector<PoseSizePrediction>& preds,
                                   const std::vector<PoseSizePrediction>& gts) {
  if (preds.empty() || preds.size() != gts.size())
    throw Error(ErrorCode::CountMismatch, "need one prediction per ground-truth instance");

  MetricReport r;
  for (size_t i = 0; i < preds.size(); ++i) {
    r.per_instance_iou.push_back(iou3d(preds[i].box, gts[i].box));
    const PoseError e = pose_error(preds[i].transform, gts[i].transform, gts[i].symmetric);
    r.per_instance_rot_deg.push_back(e.rotation_deg);
    r.per_instance_trans_cm.push_back(e.translation_cm);
  }
  const double n = static_cast<double>(preds.size());
  for (double thr : {0.25, 0.50, 0.75}) {
    int hits = 0;
    for (double v : r.per_instance_iou)
      if (v >= thr) ++hits;
    r.iou_ap[thr] = hits / n;
  }
  for (auto [deg, cm] : std::vector<std::pair<double, double>>{{5, 2}, {5, 5}, {10, 2}, {10, 5}}) {
    int hits = 0;
    for (size_t i = 0; i < preds.size(); ++i)
      if (r.per_instance_rot_deg[i] <= deg && r.per_instance_trans_cm[i] <= cm) ++hits;
    r.pose_ap[{deg, cm}] = hits / n;
  }

  const int samples = 200;
  for (int s = 0; s <= samples; ++s) {
    const double xi = static_cast<double>(s) / samples;
    int hits = 0;
    for (double v : r.per_instance_iou)
      if (v >= xi) ++hits;
    r.iou_curve_x.push_back(xi);
    r.iou_curve_y.push_back(hits / n);

    const double xr = 60.0 * xi;
    hits = 0;
    for (double v : r.per_instance_rot_deg)
      if (v <= xr) ++hits;
    r.rot_curve_x.push_back(xr);
    r.rot_curve_y.push_back(hits / n);

    const double xt = 10.0 * xi;
    hits = 0;
    for (double v : r.per_instance_trans_cm)
      if (v <= xt) ++hits;
    r.trans_curve_x.push_back(xt);
    r.trans_curve_y.push_back(hits / n);
  }
  return r;
}

namespace {

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j;
  j["config_hash"] = r.config_hash;
  nlohmann::json iou;
  for (const auto& [thr, ap] : r.iou_ap)
    iou["IoU" + std::to_string(static_cast<int>(std::llround(thr * 100)))] = ap;
  j["iou_ap"] = iou;
  nlohmann::json pose;
  for (const auto& [key, ap] : r.pose_ap) {
    const std::string name = std::to_string(static_cast<int>(key.first)) + "deg" +
                             std::to_string(static_cast<int>(key.second)) + "cm";
    pose[name] = ap;
  }
  j["pose_ap"] = pose;
  j["auc"] = r.auc;
  j["per_instance"] = {{"iou", r.per_instance_iou},
                       {"rot_deg", r.per_instance_rot_deg},
                       {"trans_cm", r.per_instance_trans_cm}};
  j["curves"] = {{"iou_x", r.iou_curve_x},     {"iou_y", r.iou_curve_y},
                 {"rot_x", r.rot_curve_x},     {"rot_y", r.rot_curve_y},
                 {"trans_x", r.trans_curve_x}, {"trans_y", r.trans_curve_y}};
  return j;
}

}  // namespace

void emit_report(const MetricReport& report, const std::string& path_prefix) {
  std::ofstream out(path_prefix + ".json");
  if (!out) throw Error(ErrorCode::IoFailure, path_prefix + ".json: cannot open for writing");
  out << to_json(report).dump(2) << "\n";
  if (!out) throw Error(ErrorCode::IoFailure, path_prefix + ".json: write failed");

  plot_curve(report.iou_curve_x, report.iou_curve_y, "3D IoU threshold", "AP",
             path_prefix + "_iou.png", report.config_hash);
  plot_curve(report.rot_curve_x, report.rot_curve_y, "rotation threshold (deg)", "AP",
             path_prefix + "_rotation.png", report.config_hash);
  plot_curve(report.trans_curve_x, report.trans_curve_y, "translation threshold (cm)", "AP",
             path_prefix + "_translation.png", report.config_hash);
}

MetricReport read_report(const std::string& json_path) {
  std::ifstream in(json_path);
  if (!in) throw Error(ErrorCode::IoFailure, json_path + ": cannot open");
  nlohmann::json j;
  in >> j;

  MetricReport r;
  r.config_hash = j.value("config_hash", "");
  for (const auto& [key, val] : j["iou_ap"].items())
    r.iou_ap[std::stod(key.substr(3)) / 100.0] = val.get<double>();
  for (const auto& [key, val] : j["pose_ap"].items()) {
    const size_t d = key.find("deg");
    const double deg = std::stod(key.substr(0, d));
    const double cm = std::stod(key.substr(d + 3, key.size() - d - 5));
    r.pose_ap[{deg, cm}] = val.get<double>();
  }
  for (const auto& [key, val] : j["auc"].items()) r.auc[key] = val.get<double>();
  r.per_instance_iou = j["per_instance"]["iou"].get<std::vector<double>>();
  r.per_instance_rot_deg = j["per_instance"]["rot_deg"].get<std::vector<double>>();
  r.per_instance_trans_cm = j["per_instance"]["trans_cm"].get<std::vector<double>>();
  r.iou_curve_x = j["curves"]["iou_x"].get<std::vector<double>>();
  r.iou_curve_y = j["curves"]["iou_y"].get<std::vector<double>>();
  r.rot_curve_x = j["curves"]["rot_x"].get<std::vector<double>>();
  r.rot_curve_y = j["curves"]["rot_y"].get<std::vector<double>>();
  r.trans_curve_x = j["curves"]["trans_x"].get<std::vector<double>>();
  r.trans_curve_y = j["curves"]["trans_y"].get<std::vector<double>>();
  return r;
}

}  // namespace catpose
