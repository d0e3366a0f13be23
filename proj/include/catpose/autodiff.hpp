#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "catpose/types.hpp"

namespace catpose::ad {

// Reverse-mode tape over Eigen matrices. Each forward pass builds a fresh
// graph of shared_ptr nodes; parameters are long-lived leaf nodes whose
// gradients accumulate until zeroed by the optimizer.

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Mat value;
  Mat grad;  // allocated on demand, same shape as value
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  // Distributes this node's grad into parents' grads.
  std::function<void(Node&)> backward;
  int64_t id = 0;

  Mat& ensure_grad() {
    if (grad.size() == 0) grad = Mat::Zero(value.rows(), value.cols());
    return grad;
  }
};

class Var {
 public:
  Var() = default;
  explicit Var(NodePtr n) : node_(std::move(n)) {}

  bool valid() const { return node_ != nullptr; }
  const Mat& value() const { return node_->value; }
  const Mat& grad() const { return node_->grad; }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  NodePtr node() const { return node_; }

  Eigen::Index rows() const { return node_->value.rows(); }
  Eigen::Index cols() const { return node_->value.cols(); }

 private:
  NodePtr node_;
};

// Leaf without gradient.
Var constant(Mat value);
// Leaf with gradient (a parameter or a probed input).
Var leaf(Mat value);

NodePtr make_node(Mat value, std::vector<NodePtr> parents, std::function<void(Node&)> backward);

// Runs reverse accumulation from a scalar (1x1) root.
void backward(const Var& root);

// ---- arithmetic ----
Var add(const Var& a, const Var& b);         // same shape, or b is 1xC row broadcast
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);         // hadamard, or b is 1x1 scalar
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var matmul(const Var& a, const Var& b);      // A * B
Var matmul_nt(const Var& a, const Var& b);   // A * B^T
Var div_guarded(const Var& a, const Var& b, double eps);  // elementwise a/b, 0 where |b|<=eps

// ---- nonlinearities & normalizations ----
Var leaky_relu(const Var& a, double slope = 0.01);
Var softmax_rows(const Var& a);
Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps = 1e-5);
Var l2_normalize_rows(const Var& a, double eps = 1e-12);

// ---- shape ops ----
Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index n);
Var gather_rows(const Var& a, std::vector<int> idx);
Var gather_entries(const Var& a, std::vector<std::pair<int, int>> entries);  // -> Nx1
// out_i = sum_t weights[i][t] * a.row(index[i][t]); fixed sparse row mixing.
Var interp_rows(const Var& a, std::vector<std::vector<int>> idx,
                std::vector<std::vector<double>> weights);
// Max over each consecutive group of `group` rows -> (rows/group) x C.
Var segment_rows_max(const Var& a, int group);
Var max_over_rows(const Var& a);   // -> 1xC, argmax backward
Var sum_all(const Var& a);         // -> 1x1
Var mean_all(const Var& a);        // -> 1x1
Var row_sqnorm(const Var& a);      // -> Nx1

double scalar(const Var& a);

}  // namespace catpose::ad
