#include "catpose/nn.hpp"

#include <cmath>

namespace catpose::nn {

ad::Var ParamStore::create(const std::string& name, Mat init) {
  if (params_.count(name)) throw Error(ErrorCode::InvalidConfig, "duplicate parameter " + name);
  ad::Var v = ad::leaf(std::move(init));
  params_.emplace(name, v);
  return v;
}

ad::Var ParamStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error(ErrorCode::InvalidConfig, "unknown parameter " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, v] : params_) v.node()->grad.setZero();
}

std::vector<std::pair<std::string, Mat>> ParamStore::state() const {
  std::vector<std::pair<std::string, Mat>> out;
  for (const auto& [name, v] : params_) out.emplace_back(name, v.value());
  return out;
}

void ParamStore::load_state(const std::vector<std::pair<std::string, Mat>>& state) {
  for (const auto& [name, mat] : state) {
    auto it = params_.find(name);
    if (it == params_.end())
      throw Error(ErrorCode::ArchitectureMismatch, "checkpoint parameter " + name + " not in model");
    if (it->second.value().rows() != mat.rows() || it->second.value().cols() != mat.cols())
      throw Error(ErrorCode::ArchitectureMismatch, "shape mismatch for parameter " + name);
    it->second.node()->value = mat;
    it->second.node()->grad.resize(0, 0);
  }
}

Mat xavier_init(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-bound, bound);
  return m;
}

Linear::Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
               bool zero_init) {
  Mat w = zero_init ? Mat::Zero(in, out) : xavier_init(in, out, rng);
  weight_ = store.create(name + ".weight", std::move(w));
  bias_ = store.create(name + ".bias", Mat::Zero(1, out));
}

ad::Var Linear::forward(const ad::Var& x) const { return ad::add(ad::matmul(x, weight_), bias_); }

Mlp::Mlp(ParamStore& store, const std::string& name, const std::vector<int>& widths, Rng& rng,
         bool zero_init_last) {
  if (widths.size() < 2) throw Error(ErrorCode::InvalidConfig, "mlp needs at least one layer");
  for (size_t i = 0; i + 1 < widths.size(); ++i) {
    const bool last = i + 2 == widths.size();
    layers_.emplace_back(store, name + ".l" + std::to_string(i), widths[i], widths[i + 1], rng,
                         last && zero_init_last);
  }
}

ad::Var Mlp::forward(const ad::Var& x) const {
  ad::Var h = x;
  for (size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i].forward(h);
    if (i + 1 < layers_.size()) h = ad::leaky_relu(h);
  }
  return h;
}

void Adam::step(ParamStore& store) {
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (auto& [name, v] : store.all()) {
    ad::Node& node = *v.node();
    if (node.grad.size() == 0) continue;
    Mat& m = m_.try_emplace(name, Mat::Zero(node.value.rows(), node.value.cols())).first->second;
    Mat& vv = v_.try_emplace(name, Mat::Zero(node.value.rows(), node.value.cols())).first->second;
    m = beta1_ * m + (1.0 - beta1_) * node.grad;
    vv = beta2_ * vv + (1.0 - beta2_) * node.grad.cwiseProduct(node.grad);
    const Mat mhat = m / bc1;
    const Mat vhat = vv / bc2;
    node.value -= lr_ * mhat.cwiseQuotient(((vhat.cwiseSqrt().array()) + eps_).matrix());
    node.grad.setZero();
  }
}

std::vector<std::pair<std::string, Mat>> Adam::state() const {
  std::vector<std::pair<std::string, Mat>> out;
  for (const auto& [name, m] : m_) out.emplace_back("m." + name, m);
  for (const auto& [name, v] : v_) out.emplace_back("v." + name, v);
  return out;
}

void Adam::load_state(const std::vector<std::pair<std::string, Mat>>& state, int64_t step_count) {
  t_ = step_count;
  m_.clear();
  v_.clear();
  for (const auto& [key, mat] : state) {
    if (key.rfind("m.", 0) == 0) m_[key.substr(2)] = mat;
    else if (key.rfind("v.", 0) == 0) v_[key.substr(2)] = mat;
  }
}

}  // namespace catpose::nn
