#include "catpose/config.hpp"

#include <fstream>

#include <json.hpp>

namespace catpose {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::vector<std::string>& allowed, const std::string& path) {
  if (!j.is_object()) throw Error(ErrorCode::InvalidConfig, path + ": expected an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw Error(ErrorCode::InvalidConfig, "unknown config key " + (path.empty() ? key : path + "." + key));
  }
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

void get_pair(const json& j, const char* key, std::pair<double, double>& out) {
  if (j.contains(key)) {
    const auto v = j.at(key).get<std::vector<double>>();
    if (v.size() != 2) throw Error(ErrorCode::InvalidConfig, std::string(key) + ": expected [lo, hi]");
    out = {v[0], v[1]};
  }
}

json pair_json(const std::pair<double, double>& p) { return json::array({p.first, p.second}); }

}  // namespace

DeformNetConfig ExperimentConfig::deform_net_config() const {
  DeformNetConfig cfg;
  cfg.encoder = encoder;
  cfg.attention = attention;
  cfg.decoder_hidden = decoder_hidden;
  cfg.use_cross_enhance = use_cross_enhance;
  cfg.n_samples = n_samples;
  cfg.chamfer_reduction = chamfer_reduction;
  return cfg;
}

void ExperimentConfig::validate() const {
  encoder.validate();
  attention.validate();
  registration.validate();
  renderer.validate();
  icp.validate();
  data.category.validate();
  if (n_model_points < 32 || n_scene_points < 32)
    throw Error(ErrorCode::InvalidConfig, "point budgets must be >= 32");
  if (train_deform.epochs < 1 || train_reg.epochs < 1 || train_deform.halve_every < 1 ||
      train_reg.halve_every < 1)
    throw Error(ErrorCode::InvalidConfig, "bad training schedule");
  if (data.train_instances < 1 || data.test_instances < 0 || data.views_per_instance < 1)
    throw Error(ErrorCode::InvalidConfig, "bad dataset sizes");
}

ExperimentConfig config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config parse failure: ") + e.what());
  }

  ExperimentConfig cfg;
  check_keys(j, {"seed", "output_dir", "encoder", "attention", "deform", "train_deform",
                 "registration", "train_reg", "renderer", "icp", "data"},
             "");
  get_to(j, "seed", cfg.seed);
  get_to(j, "output_dir", cfg.output_dir);

  if (j.contains("encoder")) {
    const json& e = j["encoder"];
    check_keys(e, {"neighbors_k", "level_widths", "downsample_ratios", "kernel_support"}, "encoder");
    get_to(e, "neighbors_k", cfg.encoder.neighbors_k);
    get_to(e, "level_widths", cfg.encoder.level_widths);
    get_to(e, "downsample_ratios", cfg.encoder.downsample_ratios);
    get_to(e, "kernel_support", cfg.encoder.kernel_support);
  }
  if (j.contains("attention")) {
    const json& a = j["attention"];
    check_keys(a, {"heads", "head_dim", "mode", "projection_dim"}, "attention");
    get_to(a, "heads", cfg.attention.heads);
    get_to(a, "head_dim", cfg.attention.head_dim);
    get_to(a, "projection_dim", cfg.attention.projection_dim);
    if (a.contains("mode")) {
      const std::string mode = a["mode"].get<std::string>();
      if (mode == "exact") cfg.attention.mode = AttentionMode::Exact;
      else if (mode == "linear") cfg.attention.mode = AttentionMode::Linear;
      else throw Error(ErrorCode::InvalidConfig, "attention.mode must be exact or linear");
    }
  }
  if (j.contains("deform")) {
    const json& d = j["deform"];
    check_keys(d, {"decoder_hidden", "use_cross_enhance", "n_samples", "chamfer_reduction",
                   "lambda_cd", "lambda_lpc", "lambda_nc"},
               "deform");
    get_to(d, "decoder_hidden", cfg.decoder_hidden);
    get_to(d, "use_cross_enhance", cfg.use_cross_enhance);
    get_to(d, "n_samples", cfg.n_samples);
    get_to(d, "lambda_cd", cfg.deform_weights.lambda_cd);
    get_to(d, "lambda_lpc", cfg.deform_weights.lambda_lpc);
    get_to(d, "lambda_nc", cfg.deform_weights.lambda_nc);
    if (d.contains("chamfer_reduction")) {
      const std::string r = d["chamfer_reduction"].get<std::string>();
      if (r == "sum") cfg.chamfer_reduction = ChamferReduction::Sum;
      else if (r == "mean") cfg.chamfer_reduction = ChamferReduction::Mean;
      else throw Error(ErrorCode::InvalidConfig, "deform.chamfer_reduction must be sum or mean");
    }
  }
  if (j.contains("train_deform")) {
    const json& t = j["train_deform"];
    check_keys(t, {"epochs", "lr", "halve_every"}, "train_deform");
    get_to(t, "epochs", cfg.train_deform.epochs);
    get_to(t, "lr", cfg.train_deform.lr);
    get_to(t, "halve_every", cfg.train_deform.halve_every);
  }
  if (j.contains("registration")) {
    const json& r = j["registration"];
    check_keys(r, {"sa_points", "sa_widths", "input_width", "feature_dim", "sa_neighbors", "top_k",
                   "groups_train", "group_size_train", "groups_test", "group_size_test",
                   "lambda_geo", "lambda_w_corr", "n_model_points", "n_scene_points"},
               "registration");
    get_to(r, "sa_points", cfg.registration.sa_points);
    get_to(r, "sa_widths", cfg.registration.sa_widths);
    get_to(r, "input_width", cfg.registration.input_width);
    get_to(r, "feature_dim", cfg.registration.feature_dim);
    get_to(r, "sa_neighbors", cfg.registration.sa_neighbors);
    get_to(r, "top_k", cfg.registration.correspondence.top_k);
    get_to(r, "groups_train", cfg.registration.correspondence.groups_train);
    get_to(r, "group_size_train", cfg.registration.correspondence.group_size_train);
    get_to(r, "groups_test", cfg.registration.correspondence.groups_test);
    get_to(r, "group_size_test", cfg.registration.correspondence.group_size_test);
    get_to(r, "lambda_geo", cfg.pose_weights.lambda_geo);
    get_to(r, "lambda_w_corr", cfg.pose_weights.lambda_w_corr);
    get_to(r, "n_model_points", cfg.n_model_points);
    get_to(r, "n_scene_points", cfg.n_scene_points);
  }
  cfg.registration.attention = cfg.attention;
  if (j.contains("train_reg")) {
    const json& t = j["train_reg"];
    check_keys(t, {"epochs", "lr", "halve_every"}, "train_reg");
    get_to(t, "epochs", cfg.train_reg.epochs);
    get_to(t, "lr", cfg.train_reg.lr);
    get_to(t, "halve_every", cfg.train_reg.halve_every);
  }
  if (j.contains("renderer")) {
    const json& r = j["renderer"];
    check_keys(r, {"width", "height", "fx", "fy", "cx", "cy"}, "renderer");
    get_to(r, "width", cfg.renderer.width);
    get_to(r, "height", cfg.renderer.height);
    get_to(r, "fx", cfg.renderer.fx);
    get_to(r, "fy", cfg.renderer.fy);
    get_to(r, "cx", cfg.renderer.cx);
    get_to(r, "cy", cfg.renderer.cy);
  }
  if (j.contains("icp")) {
    const json& i = j["icp"];
    check_keys(i, {"max_iterations", "convergence_tol", "reject_fraction"}, "icp");
    get_to(i, "max_iterations", cfg.icp.max_iterations);
    get_to(i, "convergence_tol", cfg.icp.convergence_tol);
    get_to(i, "reject_fraction", cfg.icp.reject_fraction);
  }
  if (j.contains("data")) {
    const json& d = j["data"];
    check_keys(d, {"family", "train_instances", "test_instances", "views_per_instance",
                   "eval_views", "coarse_views", "noise_sigma", "meanshift_bandwidth", "symmetric",
                   "scale_range", "elevation_range_deg", "distance_range", "height_range",
                   "radius_range", "taper_range", "stub_range", "segments", "rings"},
               "data");
    get_to(d, "family", cfg.data.family);
    get_to(d, "train_instances", cfg.data.train_instances);
    get_to(d, "test_instances", cfg.data.test_instances);
    get_to(d, "views_per_instance", cfg.data.views_per_instance);
    get_to(d, "eval_views", cfg.data.eval_views);
    get_to(d, "coarse_views", cfg.data.coarse_views);
    get_to(d, "noise_sigma", cfg.data.noise_sigma);
    get_to(d, "meanshift_bandwidth", cfg.data.meanshift_bandwidth);
    get_to(d, "symmetric", cfg.data.symmetric);
    get_pair(d, "scale_range", cfg.data.scale_range);
    get_pair(d, "elevation_range_deg", cfg.data.elevation_range_deg);
    get_pair(d, "distance_range", cfg.data.distance_range);
    get_pair(d, "height_range", cfg.data.category.height_range);
    get_pair(d, "radius_range", cfg.data.category.radius_range);
    get_pair(d, "taper_range", cfg.data.category.taper_range);
    get_pair(d, "stub_range", cfg.data.category.stub_range);
    get_to(d, "segments", cfg.data.category.segments);
    get_to(d, "rings", cfg.data.category.rings);
  }
  cfg.data.category.family = shape_family_from_string(cfg.data.family);
  cfg.data.category.instance_count = cfg.data.train_instances + cfg.data.test_instances;
  cfg.data.category.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoFailure, path + ": cannot open config");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return config_from_json_text(text);
}

std::string config_to_json_text(const ExperimentConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["output_dir"] = cfg.output_dir;
  j["encoder"] = {{"neighbors_k", cfg.encoder.neighbors_k},
                  {"level_widths", cfg.encoder.level_widths},
                  {"downsample_ratios", cfg.encoder.downsample_ratios},
                  {"kernel_support", cfg.encoder.kernel_support}};
  j["attention"] = {{"heads", cfg.attention.heads},
                    {"head_dim", cfg.attention.head_dim},
                    {"mode", cfg.attention.mode == AttentionMode::Exact ? "exact" : "linear"},
                    {"projection_dim", cfg.attention.projection_dim}};
  j["deform"] = {{"decoder_hidden", cfg.decoder_hidden},
                 {"use_cross_enhance", cfg.use_cross_enhance},
                 {"n_samples", cfg.n_samples},
                 {"chamfer_reduction", cfg.chamfer_reduction == ChamferReduction::Sum ? "sum" : "mean"},
                 {"lambda_cd", cfg.deform_weights.lambda_cd},
                 {"lambda_lpc", cfg.deform_weights.lambda_lpc},
                 {"lambda_nc", cfg.deform_weights.lambda_nc}};
  j["train_deform"] = {{"epochs", cfg.train_deform.epochs},
                       {"lr", cfg.train_deform.lr},
                       {"halve_every", cfg.train_deform.halve_every}};
  j["registration"] = {{"sa_points", cfg.registration.sa_points},
                       {"sa_widths", cfg.registration.sa_widths},
                       {"input_width", cfg.registration.input_width},
                       {"feature_dim", cfg.registration.feature_dim},
                       {"sa_neighbors", cfg.registration.sa_neighbors},
                       {"top_k", cfg.registration.correspondence.top_k},
                       {"groups_train", cfg.registration.correspondence.groups_train},
                       {"group_size_train", cfg.registration.correspondence.group_size_train},
                       {"groups_test", cfg.registration.correspondence.groups_test},
                       {"group_size_test", cfg.registration.correspondence.group_size_test},
                       {"lambda_geo", cfg.pose_weights.lambda_geo},
                       {"lambda_w_corr", cfg.pose_weights.lambda_w_corr},
                       {"n_model_points", cfg.n_model_points},
                       {"n_scene_points", cfg.n_scene_points}};
  j["train_reg"] = {{"epochs", cfg.train_reg.epochs},
                    {"lr", cfg.train_reg.lr},
                    {"halve_every", cfg.train_reg.halve_every}};
  j["renderer"] = {{"width", cfg.renderer.width}, {"height", cfg.renderer.height},
                   {"fx", cfg.renderer.fx},       {"fy", cfg.renderer.fy},
                   {"cx", cfg.renderer.cx},       {"cy", cfg.renderer.cy}};
  j["icp"] = {{"max_iterations", cfg.icp.max_iterations},
              {"convergence_tol", cfg.icp.convergence_tol},
              {"reject_fraction", cfg.icp.reject_fraction}};
  j["data"] = {{"family", cfg.data.family},
               {"train_instances", cfg.data.train_instances},
               {"test_instances", cfg.data.test_instances},
               {"views_per_instance", cfg.data.views_per_instance},
               {"eval_views", cfg.data.eval_views},
               {"coarse_views", cfg.data.coarse_views},
               {"noise_sigma", cfg.data.noise_sigma},
               {"meanshift_bandwidth", cfg.data.meanshift_bandwidth},
               {"symmetric", cfg.data.symmetric},
               {"scale_range", pair_json(cfg.data.scale_range)},
               {"elevation_range_deg", pair_json(cfg.data.elevation_range_deg)},
               {"distance_range", pair_json(cfg.data.distance_range)},
               {"height_range", pair_json(cfg.data.category.height_range)},
               {"radius_range", pair_json(cfg.data.category.radius_range)},
               {"taper_range", pair_json(cfg.data.category.taper_range)},
               {"stub_range", pair_json(cfg.data.category.stub_range)},
               {"segments", cfg.data.category.segments},
               {"rings", cfg.data.category.rings}};
  return j.dump(2);
}

std::string apply_config_overrides(const std::string& json_text,
                                   const std::vector<std::string>& overrides) {
  json j = json::parse(json_text);
  for (const std::string& item : overrides) {
    const size_t eq = item.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::InvalidConfig, "override must look like key.path=value: " + item);
    const std::string path = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    json* at = &j;
    size_t begin = 0;
    while (true) {
      const size_t dot = path.find('.', begin);
      const std::string key = path.substr(begin, dot == std::string::npos ? dot : dot - begin);
      if (dot == std::string::npos) {
        json parsed;
        try {
          parsed = json::parse(value);
        } catch (const json::exception&) {
          parsed = value;  // bare strings stay strings
        }
        (*at)[key] = parsed;
        break;
      }
      at = &(*at)[key];
      begin = dot + 1;
    }
  }
  return j.dump(2);
}

namespace {

std::string fnv1a_hex(const std::string& text) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace

std::string config_hash(const ExperimentConfig& cfg) { return fnv1a_hex(config_to_json_text(cfg)); }

std::string architecture_hash(const ExperimentConfig& cfg) {
  json j;
  j["encoder"] = {cfg.encoder.neighbors_k, cfg.encoder.level_widths, cfg.encoder.kernel_support};
  j["attention"] = {cfg.attention.heads, cfg.attention.head_dim,
                    cfg.attention.mode == AttentionMode::Exact ? "exact" : "linear",
                    cfg.attention.projection_dim};
  j["decoder_hidden"] = cfg.decoder_hidden;
  j["use_cross_enhance"] = cfg.use_cross_enhance;
  j["registration"] = {cfg.registration.sa_points, cfg.registration.sa_widths,
                       cfg.registration.input_width, cfg.registration.feature_dim};
  return fnv1a_hex(j.dump());
}

}  // namespace catpose
