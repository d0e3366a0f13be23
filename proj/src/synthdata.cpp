#include "catpose/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "catpose/geometry.hpp"
#include "catpose/image_io.hpp"
#include "catpose/rng.hpp"

namespace catpose {

namespace fs = std::filesystem;

ShapeFamily shape_family_from_string(const std::string& name) {
  if (name == "box") return ShapeFamily::Box;
  if (name == "cylinder") return ShapeFamily::Cylinder;
  if (name == "tapered_cup") return ShapeFamily::TaperedCup;
  if (name == "composite") return ShapeFamily::Composite;
  throw Error(ErrorCode::InvalidSpec, "unknown shape family " + name);
}

std::string to_string(ShapeFamily family) {
  switch (family) {
    case ShapeFamily::Box: return "box";
    case ShapeFamily::Cylinder: return "cylinder";
    case ShapeFamily::TaperedCup: return "tapered_cup";
    case ShapeFamily::Composite: return "composite";
  }
  return "unknown";
}

void CategorySpec::validate() const {
  auto check = [](std::pair<double, double> r, const char* name) {
    if (!(r.first <= r.second)) throw Error(ErrorCode::InvalidSpec, std::string("empty range ") + name);
  };
  check(height_range, "height");
  check(radius_range, "radius");
  check(taper_range, "taper");
  check(stub_range, "stub");
  if (instance_count < 1) throw Error(ErrorCode::InvalidSpec, "instance_count must be >= 1");
  if (segments < 6 || rings < 3) throw Error(ErrorCode::InvalidSpec, "lattice too coarse");
  if (radius_range.first <= 0.0 || height_range.first <= 0.0)
    throw Error(ErrorCode::InvalidSpec, "sizes must be positive");
}

namespace {

struct ShapeParams {
  double height;
  double base_radius;
  double taper;      // top/base radius ratio
  double exponent;   // superellipse cross-section, 2 = circle
  double stub;       // radial bump amplitude
  double stub_angle; // bump center
};

ShapeParams draw_params(const CategorySpec& spec, Rng& rng, bool mid) {
  auto pick = [&](std::pair<double, double> r) {
    return mid ? 0.5 * (r.first + r.second) : rng.uniform(r.first, r.second);
  };
  ShapeParams p;
  p.height = pick(spec.height_range);
  p.base_radius = pick(spec.radius_range);
  p.taper = pick(spec.taper_range);
  p.stub = pick(spec.stub_range);
  p.stub_angle = mid ? 0.0 : rng.uniform(0.0, 2.0 * std::numbers::pi);
  switch (spec.family) {
    case ShapeFamily::Box: p.exponent = 8.0; p.taper = 1.0; p.stub = 0.0; break;
    case ShapeFamily::Cylinder: p.exponent = 2.0; p.taper = 1.0; p.stub = 0.0; break;
    case ShapeFamily::TaperedCup: p.exponent = 2.0; break;
    case ShapeFamily::Composite: p.exponent = mid ? 4.0 : rng.uniform(2.0, 8.0); break;
  }
  return p;
}

TriangleMesh build_lattice_solid(const ShapeParams& p, int segments, int rings) {
  const int ns = segments, nr = rings;
  TriangleMesh mesh;
  mesh.vertices.resize(ns * nr + 2, 3);

  for (int k = 0; k < nr; ++k) {
    const double ty = static_cast<double>(k) / (nr - 1);
    const double y = (ty - 0.5) * p.height;
    const double ring_radius = p.base_radius * (1.0 + (p.taper - 1.0) * ty);
    for (int j = 0; j < ns; ++j) {
      const double theta = 2.0 * std::numbers::pi * j / ns;
      const double c = std::cos(theta), s = std::sin(theta);
      // Superellipse cross-section; exponent 2 is a circle.
      const double rho = std::pow(std::pow(std::abs(c), p.exponent) + std::pow(std::abs(s), p.exponent),
                                  -1.0 / p.exponent);
      double r = ring_radius * rho;
      if (p.stub > 0.0) {
        // Localized radial bump; breaks the rotational symmetry.
        double dth = std::remainder(theta - p.stub_angle, 2.0 * std::numbers::pi);
        const double dty = (ty - 0.55) / 0.25;
        r *= 1.0 + p.stub * std::exp(-(dth * dth) / 0.18 - dty * dty);
      }
      mesh.vertices.row(k * ns + j) << r * c, y, r * s;
    }
  }
  const int bottom_center = ns * nr;
  const int top_center = ns * nr + 1;
  mesh.vertices.row(bottom_center) << 0.0, -0.5 * p.height, 0.0;
  mesh.vertices.row(top_center) << 0.0, 0.5 * p.height, 0.0;

  std::vector<std::array<int, 3>> tris;
  for (int k = 0; k + 1 < nr; ++k)
    for (int j = 0; j < ns; ++j) {
      const int a = k * ns + j;
      const int b = k * ns + (j + 1) % ns;
      const int c = (k + 1) * ns + (j + 1) % ns;
      const int d = (k + 1) * ns + j;
      tris.push_back({a, d, c});
      tris.push_back({a, c, b});
    }
  for (int j = 0; j < ns; ++j) {
    tris.push_back({bottom_center, j, (j + 1) % ns});
    tris.push_back({top_center, (nr - 1) * ns + (j + 1) % ns, (nr - 1) * ns + j});
  }
  mesh.triangles.resize(static_cast<Eigen::Index>(tris.size()), 3);
  for (size_t i = 0; i < tris.size(); ++i)
    for (int c = 0; c < 3; ++c) mesh.triangles(static_cast<Eigen::Index>(i), c) = tris[i][c];

  // Canonical frame: centered, diameter exactly 1, symmetry axis +y.
  const Eigen::RowVector3d lo = mesh.vertices.colwise().minCoeff();
  const Eigen::RowVector3d hi = mesh.vertices.colwise().maxCoeff();
  mesh.vertices.rowwise() -= 0.5 * (lo + hi);
  mesh.vertices /= mesh.diameter();
  return mesh;
}

}  // namespace

std::vector<TriangleMesh> generate_category(const CategorySpec& spec) {
  spec.validate();
  std::vector<TriangleMesh> out;
  out.reserve(static_cast<size_t>(spec.instance_count));
  for (int i = 0; i < spec.instance_count; ++i) {
    Rng rng = Rng(spec.seed).fork(static_cast<uint64_t>(i) + 1);
    const ShapeParams p = draw_params(spec, rng, /*mid=*/false);
    out.push_back(build_lattice_solid(p, spec.segments, spec.rings));
  }
  return out;
}

TriangleMesh generate_template(const CategorySpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const ShapeParams p = draw_params(spec, rng, /*mid=*/true);
  return build_lattice_solid(p, spec.segments, spec.rings);
}

TriangleMesh cage_perturb(const TriangleMesh& mesh, double magnitude, uint64_t seed) {
  if (magnitude < 0.0) throw Error(ErrorCode::InvalidConfig, "magnitude must be >= 0");
  TriangleMesh out = mesh;
  if (magnitude == 0.0) return out;

  const Eigen::RowVector3d lo = mesh.vertices.colwise().minCoeff().array() - 1e-9;
  const Eigen::RowVector3d hi = mesh.vertices.colwise().maxCoeff().array() + 1e-9;
  const Eigen::RowVector3d span = hi - lo;

  Rng rng(seed);
  double disp[3][3][3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k)
        for (int c = 0; c < 3; ++c) disp[i][j][k][c] = rng.uniform(-magnitude, magnitude);

  for (Eigen::Index v = 0; v < mesh.vertex_count(); ++v) {
    // Cage coordinates in [0, 2] per axis; trilinear weights over the
    // surrounding 8 nodes.
    Eigen::RowVector3d t = 2.0 * (mesh.vertices.row(v) - lo).cwiseQuotient(span);
    const int ci[3] = {std::min(1, static_cast<int>(t[0])), std::min(1, static_cast<int>(t[1])),
                       std::min(1, static_cast<int>(t[2]))};
    const double f[3] = {t[0] - ci[0], t[1] - ci[1], t[2] - ci[2]};
    Eigen::RowVector3d delta = Eigen::RowVector3d::Zero();
    for (int dx = 0; dx < 2; ++dx)
      for (int dy = 0; dy < 2; ++dy)
        for (int dz = 0; dz < 2; ++dz) {
          const double w = (dx ? f[0] : 1.0 - f[0]) * (dy ? f[1] : 1.0 - f[1]) * (dz ? f[2] : 1.0 - f[2]);
          const double* d = disp[ci[0] + dx][ci[1] + dy][ci[2] + dz];
          delta += w * Eigen::RowVector3d(d[0], d[1], d[2]);
        }
    out.vertices.row(v) += delta;
  }
  return out;
}

SceneSample simulate_scene(const TriangleMesh& mesh, const SimilarityTransform& t,
                           const CameraIntrinsics& cam, double noise_sigma, uint64_t seed) {
  SceneSample sample;
  sample.depth = render_depth(mesh, t, cam);
  const Eigen::Index covered = sample.depth.valid_count();
  if (covered < 100)
    throw Error(ErrorCode::NotVisible, "only " + std::to_string(covered) + " pixels covered");

  sample.mask.resize(cam.height, cam.width);
  Rng rng(seed);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const bool hit = sample.depth.values(y, x) > 0.0;
      sample.mask(y, x) = hit ? 255 : 0;
      if (hit && noise_sigma > 0.0)
        sample.depth.values(y, x) = std::max(1e-4, sample.depth.values(y, x) + noise_sigma * rng.gaussian());
    }
  sample.gt_transform = t;
  sample.gt_mesh = mesh;
  sample.intrinsics = cam;
  return sample;
}

PointCloud lift_masked(const SceneSample& sample) {
  DepthImage masked = sample.depth;
  for (int y = 0; y < masked.height(); ++y)
    for (int x = 0; x < masked.width(); ++x)
      if (!sample.mask(y, x)) masked.values(y, x) = 0.0;
  return lift_depth(masked, sample.intrinsics);
}

PointCloud build_coarse_pointcloud(const std::vector<SceneSample>& views, int n_views,
                                   double bandwidth, uint64_t seed, int max_points) {
  if (static_cast<int>(views.size()) < n_views)
    throw Error(ErrorCode::TooFewViews,
                "have " + std::to_string(views.size()) + " views, need " + std::to_string(n_views));

  std::vector<UnitQuaternion> rotations;
  rotations.reserve(views.size());
  for (const auto& v : views) rotations.push_back(UnitQuaternion::from_rotation(v.gt_transform.rotation));
  const auto selected = farthest_rotation_sample(rotations, n_views, seed);

  std::vector<MatX3> parts;
  Eigen::Index total = 0;
  for (int idx : selected) {
    const SceneSample& view = views[static_cast<size_t>(idx)];
    PointCloud lifted = lift_masked(view);
    if (lifted.empty()) continue;
    // Back to the normalized object frame, same pose and scale as the template.
    MatX3 normalized = apply_similarity(invert_similarity(view.gt_transform), lifted.points);
    total += normalized.rows();
    parts.push_back(std::move(normalized));
  }
  if (total == 0) throw Error(ErrorCode::EmptyCloud, "no masked depth in the selected views");

  MatX3 merged(total, 3);
  Eigen::Index at = 0;
  for (const auto& part : parts) {
    merged.middleRows(at, part.rows()) = part;
    at += part.rows();
  }
  if (merged.rows() > max_points) {
    Rng rng = Rng(seed).fork(0xc0a5);
    const auto keep = rng.sample_without_replacement(static_cast<int>(merged.rows()), max_points);
    MatX3 sub(max_points, 3);
    for (int i = 0; i < max_points; ++i) sub.row(i) = merged.row(keep[static_cast<size_t>(i)]);
    merged = std::move(sub);
  }
  return meanshift_outlier_filter(PointCloud(merged), bandwidth);
}

// ---- NOCS-style directory layout ----

std::atomic<int> NocsIngest::live_frames_{0};
std::atomic<int> NocsIngest::peak_live_frames_{0};

void NocsIngest::reset_instrumentation() {
  live_frames_ = 0;
  peak_live_frames_ = 0;
}

NocsIngest::NocsIngest(const std::string& root) : root_(root) {
  const fs::path cam_path = fs::path(root) / "camera.txt";
  std::ifstream cam_in(cam_path);
  if (!cam_in) throw Error(ErrorCode::MalformedDataset, cam_path.string() + ": missing camera file");
  cam_in >> cam_.fx >> cam_.fy >> cam_.cx >> cam_.cy >> cam_.width >> cam_.height;
  if (!cam_in) throw Error(ErrorCode::MalformedDataset, cam_path.string() + ": bad camera line");
  cam_.validate();

  for (const auto& entry : fs::directory_iterator(root)) {
    const std::string name = entry.path().filename().string();
    const size_t at = name.find("_depth.png");
    if (at != std::string::npos) frames_.push_back(name.substr(0, at));
  }
  std::sort(frames_.begin(), frames_.end());
  if (frames_.empty()) throw Error(ErrorCode::MalformedDataset, root + ": no depth frames");
}

std::optional<SceneSample> NocsIngest::next() {
  if (cursor_ >= frames_.size()) return std::nullopt;
  const std::string id = frames_[cursor_++];
  const fs::path base = fs::path(root_);

  live_frames_.fetch_add(1);
  peak_live_frames_.store(std::max(peak_live_frames_.load(), live_frames_.load()));

  SceneSample sample;
  sample.intrinsics = cam_;
  const std::string depth_path = (base / (id + "_depth.png")).string();
  const std::string mask_path = (base / (id + "_mask.png")).string();
  const std::string pose_path = (base / (id + "_pose.txt")).string();
  try {
    sample.depth.values = read_depth_png(depth_path);
  } catch (const Error&) {
    live_frames_.fetch_sub(1);
    throw Error(ErrorCode::MalformedDataset, depth_path + ": missing or unreadable depth");
  }
  try {
    sample.mask = read_mask_png(mask_path);
  } catch (const Error&) {
    live_frames_.fetch_sub(1);
    throw Error(ErrorCode::MalformedDataset, mask_path + ": missing or unreadable mask");
  }
  std::ifstream pose_in(pose_path);
  if (!pose_in) {
    live_frames_.fetch_sub(1);
    throw Error(ErrorCode::MalformedDataset, pose_path + ": missing pose file");
  }
  pose_in >> sample.gt_transform.scale;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) pose_in >> sample.gt_transform.rotation(r, c);
  for (int c = 0; c < 3; ++c) pose_in >> sample.gt_transform.translation[c];
  if (!pose_in) {
    live_frames_.fetch_sub(1);
    throw Error(ErrorCode::MalformedDataset, pose_path + ": truncated pose");
  }
  live_frames_.fetch_sub(1);
  return sample;
}

void write_nocs_camera(const std::string& dir, const CameraIntrinsics& cam) {
  fs::create_directories(dir);
  std::ofstream out(fs::path(dir) / "camera.txt");
  if (!out) throw Error(ErrorCode::IoFailure, dir + "/camera.txt: cannot open for writing");
  out.precision(17);
  out << cam.fx << " " << cam.fy << " " << cam.cx << " " << cam.cy << " " << cam.width << " "
      << cam.height << "\n";
}

void write_nocs_frame(const std::string& dir, const std::string& frame_id,
                      const SceneSample& sample) {
  fs::create_directories(dir);
  const fs::path base(dir);
  write_depth_png(sample.depth.values, (base / (frame_id + "_depth.png")).string());
  write_mask_png(sample.mask, (base / (frame_id + "_mask.png")).string());
  std::ofstream pose(base / (frame_id + "_pose.txt"));
  if (!pose) throw Error(ErrorCode::IoFailure, frame_id + ": cannot write pose");
  pose.precision(17);
  pose << sample.gt_transform.scale << "\n";
  for (int r = 0; r < 3; ++r)
    pose << sample.gt_transform.rotation(r, 0) << " " << sample.gt_transform.rotation(r, 1) << " "
         << sample.gt_transform.rotation(r, 2) << "\n";
  pose << sample.gt_transform.translation[0] << " " << sample.gt_transform.translation[1] << " "
       << sample.gt_transform.translation[2] << "\n";
}

}  // namespace catpose
