#pragma once

#include <string>
#include <vector>

#include "catpose/nn.hpp"

namespace catpose {

// Self-describing training snapshot: parameter tensors, optimizer moments,
// schedule position, and the hashes that gate reuse.
struct Checkpoint {
  std::string kind;  // "deform" or "reg"
  std::string architecture_hash;
  std::string config_hash;
  uint64_t seed = 0;
  int epoch = 0;  // epochs completed
  int64_t adam_steps = 0;
  std::vector<std::pair<std::string, Mat>> params;
  std::vector<std::pair<std::string, Mat>> adam_state;
  std::vector<double> loss_curve;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace catpose
