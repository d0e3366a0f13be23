#pragma once

#include <map>
#include <string>
#include <vector>

#include "catpose/autodiff.hpp"
#include "catpose/rng.hpp"

namespace catpose::nn {

// Long-lived named parameter leaves; optimizers mutate values in place.
class ParamStore {
 public:
  ad::Var create(const std::string& name, Mat init);
  ad::Var get(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }

  void zero_grads();
  const std::map<std::string, ad::Var>& all() const { return params_; }

  std::vector<std::pair<std::string, Mat>> state() const;
  void load_state(const std::vector<std::pair<std::string, Mat>>& state);

 private:
  std::map<std::string, ad::Var> params_;
};

Mat xavier_init(Eigen::Index rows, Eigen::Index cols, Rng& rng);

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
         bool zero_init = false);

  ad::Var forward(const ad::Var& x) const;
  int out_dim() const { return static_cast<int>(weight_.cols()); }

 private:
  ad::Var weight_, bias_;
};

// Feed-forward stack with leaky ReLU between layers; the last layer is
// linear (optionally zero-initialized, making the map start at zero).
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParamStore& store, const std::string& name, const std::vector<int>& widths, Rng& rng,
      bool zero_init_last = false);

  ad::Var forward(const ad::Var& x) const;

 private:
  std::vector<Linear> layers_;
};

class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int64_t step_count() const { return t_; }

  // Applies one update from accumulated gradients, then clears them.
  void step(ParamStore& store);

  // Moment state for exact training resume.
  std::vector<std::pair<std::string, Mat>> state() const;
  void load_state(const std::vector<std::pair<std::string, Mat>>& state, int64_t step_count);

 private:
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
  std::map<std::string, Mat> m_, v_;
};

}  // namespace catpose::nn
