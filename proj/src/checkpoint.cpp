#include "catpose/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

namespace catpose {

using nlohmann::json;

namespace {

json tensor_index(const std::vector<std::pair<std::string, Mat>>& tensors) {
  json idx = json::array();
  for (const auto& [name, mat] : tensors)
    idx.push_back({{"name", name}, {"rows", mat.rows()}, {"cols", mat.cols()}});
  return idx;
}

void write_tensors(std::ofstream& out, const std::vector<std::pair<std::string, Mat>>& tensors) {
  for (const auto& [name, mat] : tensors)
    for (Eigen::Index i = 0; i < mat.rows(); ++i)
      for (Eigen::Index j = 0; j < mat.cols(); ++j) {
        const double v = mat(i, j);
        out.write(reinterpret_cast<const char*>(&v), 8);
      }
}

std::vector<std::pair<std::string, Mat>> read_tensors(std::ifstream& in, const json& idx) {
  std::vector<std::pair<std::string, Mat>> out;
  for (const auto& entry : idx) {
    Mat m(entry["rows"].get<Eigen::Index>(), entry["cols"].get<Eigen::Index>());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        double v;
        in.read(reinterpret_cast<char*>(&v), 8);
        m(i, j) = v;
      }
    out.emplace_back(entry["name"].get<std::string>(), std::move(m));
  }
  return out;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoFailure, path + ": cannot open for writing");

  json header;
  header["kind"] = ckpt.kind;
  header["architecture_hash"] = ckpt.architecture_hash;
  header["config_hash"] = ckpt.config_hash;
  header["seed"] = ckpt.seed;
  header["epoch"] = ckpt.epoch;
  header["adam_steps"] = ckpt.adam_steps;
  header["loss_curve"] = ckpt.loss_curve;
  header["params"] = tensor_index(ckpt.params);
  header["adam_state"] = tensor_index(ckpt.adam_state);
  const std::string text = header.dump();

  const char magic[4] = {'C', 'P', 'C', 'K'};
  out.write(magic, 4);
  const uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_tensors(out, ckpt.params);
  write_tensors(out, ckpt.adam_state);
  if (!out) throw Error(ErrorCode::IoFailure, path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::MissingCheckpoint, path + ": cannot open");
  char magic[4];
  in.read(magic, 4);
  if (std::memcmp(magic, "CPCK", 4) != 0)
    throw Error(ErrorCode::MissingCheckpoint, path + ": not a checkpoint file");
  uint32_t version;
  in.read(reinterpret_cast<char*>(&version), 4);
  uint64_t len;
  in.read(reinterpret_cast<char*>(&len), 8);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error(ErrorCode::MissingCheckpoint, path + ": truncated header");

  json header = json::parse(text);
  Checkpoint ckpt;
  ckpt.kind = header["kind"].get<std::string>();
  ckpt.architecture_hash = header["architecture_hash"].get<std::string>();
  ckpt.config_hash = header["config_hash"].get<std::string>();
  ckpt.seed = header["seed"].get<uint64_t>();
  ckpt.epoch = header["epoch"].get<int>();
  ckpt.adam_steps = header["adam_steps"].get<int64_t>();
  ckpt.loss_curve = header["loss_curve"].get<std::vector<double>>();
  ckpt.params = read_tensors(in, header["params"]);
  ckpt.adam_state = read_tensors(in, header["adam_state"]);
  if (!in) throw Error(ErrorCode::MissingCheckpoint, path + ": truncated tensors");
  return ckpt;
}

}  // namespace catpose
