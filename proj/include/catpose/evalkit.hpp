#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "catpose/types.hpp"

namespace catpose {

struct OrientedBox {
  Vec3 center = Vec3::Zero();
  Mat3 rotation = Mat3::Identity();
  Vec3 extents = Vec3::Ones();  // full sizes per axis

  double volume() const { return extents.prod(); }
  // 8 corners in world coordinates.
  std::vector<Vec3> corners() const;
};

struct PoseSizePrediction {
  SimilarityTransform transform;
  OrientedBox box;
  std::string category;
  bool symmetric = false;
};

// Exact intersection-over-union of oriented boxes via half-space clipping of
// the convex intersection polytope.
double iou3d(const OrientedBox& a, const OrientedBox& b);

struct PoseError {
  double rotation_deg = 0.0;
  double translation_cm = 0.0;
};

// Rotation error is the geodesic angle, except symmetric categories compare
// the mapped symmetry axes (+y convention) only.
PoseError pose_error(const SimilarityTransform& pred, const SimilarityTransform& gt,
                     bool symmetric);

// Fraction of instances whose (pred, gt) pair satisfies the predicate;
// mask-given protocol (one prediction per instance).
double average_precision(const std::vector<PoseSizePrediction>& preds,
                         const std::vector<PoseSizePrediction>& gts,
                         const std::function<bool(const PoseSizePrediction&,
                                                  const PoseSizePrediction&)>& predicate);

// ADD (or ADD-S for symmetric) area under the accuracy-threshold curve on
// [0, max_threshold], integrated exactly from the empirical step curve.
double add_auc(const std::vector<SimilarityTransform>& preds,
               const std::vector<SimilarityTransform>& gts, const PointCloud& model_points,
               bool symmetric, double max_threshold = 0.1);

// Mean per-point alignment error of one prediction.
double add_error(const SimilarityTransform& pred, const SimilarityTransform& gt,
                 const PointCloud& model_points, bool symmetric);

struct MetricReport {
  std::map<double, double> iou_ap;                          // IoU threshold -> AP
  std::map<std::pair<double, double>, double> pose_ap;      // (deg, cm) -> AP
  std::map<std::string, double> auc;                        // label -> AUC
  std::vector<double> per_instance_iou;
  std::vector<double> per_instance_rot_deg;
  std::vector<double> per_instance_trans_cm;
  // Sampled precision curves (x, y) spanning IoU 0-1, rotation 0-60 deg,
  // translation 0-10 cm.
  std::vector<double> iou_curve_x, iou_curve_y;
  std::vector<double> rot_curve_x, rot_curve_y;
  std::vector<double> trans_curve_x, trans_curve_y;
  std::string config_hash;
};

// Standard evaluation grid: IoU {25, 50, 75}% and {5d2cm, 5d5cm, 10d2cm,
// 10d5cm}, plus sampled curves.
MetricReport compute_metric_report(const std::vector<PoseSizePrediction>& preds,
                                   const std::vector<PoseSizePrediction>& gts);

// Writes <path>.json plus precision-threshold curve plots next to it.
void emit_report(const MetricReport& report, const std::string& path_prefix);
MetricReport read_report(const std::string& json_path);

}  // namespace catpose
