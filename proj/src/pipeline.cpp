#include "catpose/pipeline.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <thread>

#include <json.hpp>

#include "catpose/geometry.hpp"
#include "catpose/icp.hpp"
#include "catpose/mesh_io.hpp"

namespace catpose {

namespace fs = std::filesystem;
using nlohmann::json;

void parallel_for(int count, const std::function<void(int)>& fn) {
  const int workers = std::max(1u, std::min(std::thread::hardware_concurrency(),
                                            static_cast<unsigned>(count)));
  if (workers <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr failure;
  std::mutex failure_mutex;
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&]() {
      while (true) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

SimilarityTransform sample_pose(const DataConfig& data, Rng& rng) {
  SimilarityTransform t;
  t.scale = rng.uniform(data.scale_range.first, data.scale_range.second);
  const double yaw = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double elev = rng.uniform(data.elevation_range_deg.first, data.elevation_range_deg.second) *
                      std::numbers::pi / 180.0;
  const double roll = rng.uniform(-10.0, 10.0) * std::numbers::pi / 180.0;
  // Upright object seen from an elevated camera (y-down frame), free yaw.
  t.rotation = rotation_z(roll) * rotation_x(std::numbers::pi + elev) * rotation_y(yaw);
  const double dist = rng.uniform(data.distance_range.first, data.distance_range.second);
  t.translation = Vec3(rng.uniform(-0.06, 0.06) * dist, rng.uniform(-0.06, 0.06) * dist, dist);
  return t;
}

}  // namespace

FixtureDataset build_fixture(const ExperimentConfig& cfg) {
  FixtureDataset ds;
  ds.camera = cfg.renderer;

  CategorySpec spec = cfg.data.category;
  spec.instance_count = cfg.data.train_instances + cfg.data.test_instances;
  const auto meshes = generate_category(spec);

  // Template: mid-range shape, lightly cage-perturbed so it is not itself an
  // instance, re-normalized to unit diameter.
  TriangleMesh tpl = cage_perturb(generate_template(spec), 0.03, spec.seed ^ 0x7e3);
  const Eigen::RowVector3d lo = tpl.vertices.colwise().minCoeff();
  const Eigen::RowVector3d hi = tpl.vertices.colwise().maxCoeff();
  tpl.vertices.rowwise() -= 0.5 * (lo + hi);
  tpl.vertices /= tpl.diameter();
  ds.template_mesh = tpl;

  for (int i = 0; i < spec.instance_count; ++i) {
    InstanceData inst;
    inst.id = i;
    inst.train = i < cfg.data.train_instances;
    inst.gt_mesh = meshes[static_cast<size_t>(i)];

    const int n_views = inst.train ? cfg.data.views_per_instance : cfg.data.eval_views;
    for (int v = 0; v < n_views; ++v) {
      // Deterministic retry chain for the rare out-of-frustum draw.
      for (int attempt = 0;; ++attempt) {
        Rng rng = Rng(cfg.seed).fork((static_cast<uint64_t>(i) << 20) ^ (static_cast<uint64_t>(v) << 4) ^
                                     static_cast<uint64_t>(attempt));
        const SimilarityTransform pose = sample_pose(cfg.data, rng);
        try {
          inst.views.push_back(simulate_scene(inst.gt_mesh, pose, ds.camera, cfg.data.noise_sigma,
                                              rng.next_u64()));
          break;
        } catch (const Error& e) {
          if (e.code() != ErrorCode::NotVisible || attempt >= 8) throw;
        }
      }
    }
    if (inst.train)
      inst.coarse = build_coarse_pointcloud(inst.views,
                                            std::min<int>(cfg.data.coarse_views,
                                                          static_cast<int>(inst.views.size())),
                                            cfg.data.meanshift_bandwidth, cfg.seed);
    ds.instances.push_back(std::move(inst));
  }
  return ds;
}

void write_fixture(const FixtureDataset& ds, const std::string& dir, const std::string& cfg_hash) {
  fs::create_directories(dir);
  write_obj(ds.template_mesh, (fs::path(dir) / "template.obj").string());

  json manifest;
  manifest["config_hash"] = cfg_hash;
  manifest["template"] = "template.obj";
  manifest["instances"] = json::array();

  for (const auto& inst : ds.instances) {
    char name[32];
    std::snprintf(name, sizeof(name), "inst_%03d", inst.id);
    const fs::path inst_dir = fs::path(dir) / name;
    fs::create_directories(inst_dir);
    write_obj(inst.gt_mesh, (inst_dir / "mesh.obj").string());
    if (!inst.coarse.empty()) write_ply_points(inst.coarse, (inst_dir / "coarse.ply").string());

    const fs::path views_dir = inst_dir / "views";
    write_nocs_camera(views_dir.string(), ds.camera);
    for (size_t v = 0; v < inst.views.size(); ++v) {
      char frame[16];
      std::snprintf(frame, sizeof(frame), "%04zu", v);
      write_nocs_frame(views_dir.string(), frame, inst.views[v]);
    }
    manifest["instances"].push_back({{"id", inst.id},
                                     {"train", inst.train},
                                     {"views", inst.views.size()},
                                     {"dir", name}});
  }
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw Error(ErrorCode::IoFailure, dir + "/manifest.json: cannot open for writing");
  out << manifest.dump(2) << "\n";
}

FixtureDataset load_fixture(const std::string& dir) {
  const fs::path base(dir);
  std::ifstream in(base / "manifest.json");
  if (!in) throw Error(ErrorCode::MalformedDataset, dir + ": missing manifest.json");
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::MalformedDataset, dir + ": bad manifest: " + e.what());
  }

  FixtureDataset ds;
  ds.template_mesh = read_obj((base / manifest["template"].get<std::string>()).string());
  bool have_camera = false;
  for (const auto& entry : manifest["instances"]) {
    InstanceData inst;
    inst.id = entry["id"].get<int>();
    inst.train = entry["train"].get<bool>();
    const fs::path inst_dir = base / entry["dir"].get<std::string>();
    inst.gt_mesh = read_obj((inst_dir / "mesh.obj").string());
    if (fs::exists(inst_dir / "coarse.ply"))
      inst.coarse = read_ply_points((inst_dir / "coarse.ply").string());

    NocsIngest ingest((inst_dir / "views").string());
    if (!have_camera) {
      ds.camera = ingest.intrinsics();
      have_camera = true;
    }
    while (auto sample = ingest.next()) {
      sample->gt_mesh = inst.gt_mesh;
      inst.views.push_back(std::move(*sample));
    }
    if (inst.views.empty())
      throw Error(ErrorCode::MalformedDataset, inst_dir.string() + ": no views");
    ds.instances.push_back(std::move(inst));
  }
  if (ds.instances.empty()) throw Error(ErrorCode::MalformedDataset, dir + ": empty dataset");
  return ds;
}

PointCloud scene_cloud(const SceneSample& view, int n_points, uint64_t seed) {
  PointCloud full = lift_masked(view);
  if (full.empty()) throw Error(ErrorCode::EmptyCloud, "view has no masked depth");
  if (full.size() <= n_points) return full;
  Rng rng(seed);
  const auto keep = rng.sample_without_replacement(static_cast<int>(full.size()), n_points);
  MatX3 sub(n_points, 3);
  for (int i = 0; i < n_points; ++i) sub.row(i) = full.points.row(keep[static_cast<size_t>(i)]);
  return PointCloud(sub);
}

std::vector<DeformSample> make_deform_dataset(const FixtureDataset& ds,
                                              const ExperimentConfig& cfg) {
  std::vector<DeformSample> out;
  for (const auto& inst : ds.instances) {
    if (!inst.train) continue;
    for (size_t v = 0; v < inst.views.size(); ++v) {
      DeformSample s;
      s.template_mesh = ds.template_mesh;
      s.scene = scene_cloud(inst.views[v], cfg.n_scene_points,
                            cfg.seed ^ (static_cast<uint64_t>(inst.id) << 24) ^ v);
      s.coarse_target = inst.coarse;
      out.push_back(std::move(s));
    }
  }
  if (out.empty()) throw Error(ErrorCode::EmptyDataset, "no training instances in fixture");
  return out;
}

std::vector<RegSample> make_reg_dataset(const FixtureDataset& ds, const DeformNet& deform,
                                        const ExperimentConfig& cfg) {
  std::vector<const SceneSample*> views;
  std::vector<uint64_t> seeds;
  for (const auto& inst : ds.instances) {
    if (!inst.train) continue;
    for (size_t v = 0; v < inst.views.size(); ++v) {
      views.push_back(&inst.views[v]);
      seeds.push_back(cfg.seed ^ (static_cast<uint64_t>(inst.id) << 24) ^ v);
    }
  }
  if (views.empty()) throw Error(ErrorCode::EmptyDataset, "no training instances in fixture");

  std::vector<RegSample> out(views.size());
  parallel_for(static_cast<int>(views.size()), [&](int i) {
    RegSample s;
    s.camera = ds.camera;
    s.scene_points = scene_cloud(*views[static_cast<size_t>(i)], cfg.n_scene_points, seeds[static_cast<size_t>(i)]);
    const DeformationResult deformed = deform.deform(ds.template_mesh, s.scene_points);
    s.model_mesh = deformed.deformed_mesh;
    s.model_points =
        sample_surface(s.model_mesh, cfg.n_model_points, seeds[static_cast<size_t>(i)] ^ 0xfeed).cloud;
    out[static_cast<size_t>(i)] = std::move(s);
  });
  return out;
}

namespace {

OrientedBox box_from_mesh(const TriangleMesh& mesh, const SimilarityTransform& t) {
  const Eigen::RowVector3d lo = mesh.vertices.colwise().minCoeff();
  const Eigen::RowVector3d hi = mesh.vertices.colwise().maxCoeff();
  OrientedBox box;
  box.center = t.apply(0.5 * (lo + hi).transpose());
  box.rotation = t.rotation;
  box.extents = t.scale * (hi - lo).transpose();
  return box;
}

double mean_sq_nn_residual(const PointCloud& from, const PointCloud& to) {
  const auto nn = nearest_indices(from.points, to.points);
  double total = 0.0;
  for (Eigen::Index i = 0; i < from.size(); ++i)
    total += (from.points.row(i) - to.points.row(nn[i])).squaredNorm();
  return total / static_cast<double>(from.size());
}

struct ViewResult {
  PoseSizePrediction pred, gt;
  double deformed_cd = 0.0, template_cd = 0.0;
  double residual_initial = 0.0, residual_refined = 0.0;
};

}  // namespace

EvalOutputs evaluate_pipeline(const FixtureDataset& ds, const DeformNet& deform, const RegNet& reg,
                              const ExperimentConfig& cfg, bool icp_refine) {
  struct Task {
    const InstanceData* inst;
    const SceneSample* view;
    size_t view_idx;
    int held_out_slot;
  };
  std::vector<Task> tasks;
  std::vector<int> instance_slots;
  int slot = 0;
  for (const auto& inst : ds.instances) {
    if (inst.train) continue;
    instance_slots.push_back(slot);
    for (size_t v = 0; v < inst.views.size(); ++v)
      tasks.push_back({&inst, &inst.views[v], v, slot});
    ++slot;
  }
  if (tasks.empty()) throw Error(ErrorCode::MalformedDataset, "fixture has no held-out instances");

  std::vector<ViewResult> results(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), [&](int i) {
    const Task& task = tasks[static_cast<size_t>(i)];
    const uint64_t seed = cfg.seed ^ 0xe7a1 ^ (static_cast<uint64_t>(task.inst->id) << 20) ^ task.view_idx;
    ViewResult r;

    const PointCloud scene = scene_cloud(*task.view, cfg.n_scene_points, seed);
    const DeformationResult deformed = deform.deform(ds.template_mesh, scene);
    const PointCloud model_pts = sample_surface(deformed.deformed_mesh, cfg.n_model_points, seed).cloud;

    PoseEstimate est = reg.estimate_pose_scale(model_pts, scene, /*training_split=*/false, seed);
    SimilarityTransform pred = est.transform;

    const DepthImage rendered = render_depth(deformed.deformed_mesh, pred, ds.camera);
    const PointCloud lifted = lift_depth(rendered, ds.camera);
    if (!lifted.empty()) {
      r.residual_initial = mean_sq_nn_residual(lifted, scene);
      if (icp_refine) {
        pred = refine_prediction(lifted, scene, pred, cfg.icp);
        const SimilarityTransform correction =
            compose(pred, invert_similarity(est.transform));
        MatX3 corrected = apply_similarity(correction, lifted.points);
        r.residual_refined = mean_sq_nn_residual(PointCloud(corrected), scene);
      } else {
        r.residual_refined = r.residual_initial;
      }
    }

    r.pred.transform = pred;
    r.pred.box = box_from_mesh(deformed.deformed_mesh, pred);
    r.pred.symmetric = cfg.data.symmetric;
    r.pred.category = cfg.data.family;
    r.gt.transform = task.view->gt_transform;
    r.gt.box = box_from_mesh(task.inst->gt_mesh, task.view->gt_transform);
    r.gt.symmetric = cfg.data.symmetric;
    r.gt.category = cfg.data.family;

    // Shape quality in the normalized frame against the ground-truth surface.
    const PointCloud gt_samples = sample_surface(task.inst->gt_mesh, 2048, seed ^ 0x6d).cloud;
    const PointCloud def_samples = sample_surface(deformed.deformed_mesh, 2048, seed ^ 0x6e).cloud;
    const PointCloud tpl_samples = sample_surface(ds.template_mesh, 2048, seed ^ 0x6f).cloud;
    r.deformed_cd = chamfer_distance(def_samples, gt_samples, ChamferReduction::Mean);
    r.template_cd = chamfer_distance(tpl_samples, gt_samples, ChamferReduction::Mean);
    results[static_cast<size_t>(i)] = std::move(r);
  });

  EvalOutputs out;
  std::vector<PoseSizePrediction> preds, gts;
  out.deformed_chamfer.assign(instance_slots.size(), 0.0);
  out.template_chamfer.assign(instance_slots.size(), 0.0);
  std::vector<int> counts(instance_slots.size(), 0);
  for (size_t i = 0; i < results.size(); ++i) {
    preds.push_back(results[i].pred);
    gts.push_back(results[i].gt);
    const int s = tasks[i].held_out_slot;
    out.deformed_chamfer[static_cast<size_t>(s)] += results[i].deformed_cd;
    out.template_chamfer[static_cast<size_t>(s)] += results[i].template_cd;
    ++counts[static_cast<size_t>(s)];
    out.mean_residual_initial += results[i].residual_initial;
    out.mean_residual_refined += results[i].residual_refined;
  }
  for (size_t s = 0; s < counts.size(); ++s) {
    out.deformed_chamfer[s] /= std::max(1, counts[s]);
    out.template_chamfer[s] /= std::max(1, counts[s]);
  }
  out.mean_residual_initial /= static_cast<double>(results.size());
  out.mean_residual_refined /= static_cast<double>(results.size());
  out.report = compute_metric_report(preds, gts);
  return out;
}

EvalOutputs evaluate_icp_baseline(const FixtureDataset& ds, const ExperimentConfig& cfg) {
  struct Task {
    const InstanceData* inst;
    const SceneSample* view;
    size_t view_idx;
  };
  std::vector<Task> tasks;
  for (const auto& inst : ds.instances) {
    if (inst.train) continue;
    for (size_t v = 0; v < inst.views.size(); ++v) tasks.push_back({&inst, &inst.views[v], v});
  }
  if (tasks.empty()) throw Error(ErrorCode::MalformedDataset, "fixture has no held-out instances");

  std::vector<ViewResult> results(tasks.size());
  parallel_for(static_cast<int>(tasks.size()), [&](int i) {
    const Task& task = tasks[static_cast<size_t>(i)];
    const uint64_t seed = cfg.seed ^ 0x1c9 ^ (static_cast<uint64_t>(task.inst->id) << 20) ^ task.view_idx;
    ViewResult r;

    const PointCloud scene = scene_cloud(*task.view, cfg.n_scene_points, seed);
    const PointCloud tpl_pts = sample_surface(ds.template_mesh, cfg.n_model_points, seed).cloud;

    // Documented initialization: scene centroid, identity rotation, scale
    // from the bounding-radius ratio.
    SimilarityTransform init;
    const Eigen::RowVector3d sc = scene.points.colwise().mean();
    const Eigen::RowVector3d tc = tpl_pts.points.colwise().mean();
    double scene_r = 0.0, tpl_r = 0.0;
    for (Eigen::Index k = 0; k < scene.size(); ++k)
      scene_r = std::max(scene_r, (scene.points.row(k) - sc).norm());
    for (Eigen::Index k = 0; k < tpl_pts.size(); ++k)
      tpl_r = std::max(tpl_r, (tpl_pts.points.row(k) - tc).norm());
    init.scale = scene_r / std::max(tpl_r, 1e-9);
    init.translation = sc.transpose() - init.scale * tc.transpose();

    const IcpResult icp = icp_similarity(tpl_pts, scene, init, cfg.icp);
    r.pred.transform = icp.transform;
    r.pred.box = box_from_mesh(ds.template_mesh, icp.transform);
    r.pred.symmetric = cfg.data.symmetric;
    r.pred.category = cfg.data.family;
    r.gt.transform = task.view->gt_transform;
    r.gt.box = box_from_mesh(task.inst->gt_mesh, task.view->gt_transform);
    r.gt.symmetric = cfg.data.symmetric;
    r.gt.category = cfg.data.family;
    results[static_cast<size_t>(i)] = std::move(r);
  });

  EvalOutputs out;
  std::vector<PoseSizePrediction> preds, gts;
  for (const auto& r : results) {
    preds.push_back(r.pred);
    gts.push_back(r.gt);
  }
  out.report = compute_metric_report(preds, gts);
  return out;
}

}  // namespace catpose
