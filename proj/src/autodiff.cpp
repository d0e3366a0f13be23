#include "catpose/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

namespace catpose::ad {

namespace {
std::atomic<int64_t> g_next_id{1};
}

Var constant(Mat value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = false;
  n->id = g_next_id++;
  return Var(n);
}

Var leaf(Mat value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  n->id = g_next_id++;
  return Var(n);
}

NodePtr make_node(Mat value, std::vector<NodePtr> parents, std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->parents = std::move(parents);
  n->backward = std::move(backward);
  n->requires_grad = false;
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  n->id = g_next_id++;
  return n;
}

void backward(const Var& root) {
  if (root.value().size() != 1)
    throw Error(ErrorCode::ShapeMismatch, "backward root must be a 1x1 scalar");
  // Topological order by DFS, then reverse sweep.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack{{root.node().get(), 0}};
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = node->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });
  root.node()->ensure_grad()(0, 0) += 1.0;
  for (Node* n : order) {
    if (n->backward && n->grad.size() != 0) n->backward(*n);
  }
}

namespace {

void accum(Node& parent, const Mat& g) {
  if (!parent.requires_grad) return;
  parent.ensure_grad() += g;
}

}  // namespace

Var add(const Var& a, const Var& b) {
  if (b.rows() == 1 && a.rows() != 1 && a.cols() == b.cols()) {
    Mat v = a.value();
    v.rowwise() += b.value().row(0);
    return Var(make_node(std::move(v), {a.node(), b.node()}, [](Node& n) {
      accum(*n.parents[0], n.grad);
      if (n.parents[1]->requires_grad) n.parents[1]->ensure_grad() += n.grad.colwise().sum();
    }));
  }
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::ShapeMismatch, "add shapes differ");
  return Var(make_node(a.value() + b.value(), {a.node(), b.node()}, [](Node& n) {
    accum(*n.parents[0], n.grad);
    accum(*n.parents[1], n.grad);
  }));
}

Var sub(const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::ShapeMismatch, "sub shapes differ");
  return Var(make_node(a.value() - b.value(), {a.node(), b.node()}, [](Node& n) {
    accum(*n.parents[0], n.grad);
    accum(*n.parents[1], -n.grad);
  }));
}

Var mul(const Var& a, const Var& b) {
  if (b.rows() == 1 && b.cols() == 1) {
    const double s = b.value()(0, 0);
    return Var(make_node(a.value() * s, {a.node(), b.node()}, [s](Node& n) {
      accum(*n.parents[0], n.grad * s);
      if (n.parents[1]->requires_grad)
        n.parents[1]->ensure_grad()(0, 0) += (n.grad.array() * n.parents[0]->value.array()).sum();
    }));
  }
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::ShapeMismatch, "mul shapes differ");
  return Var(make_node(a.value().cwiseProduct(b.value()), {a.node(), b.node()}, [](Node& n) {
    accum(*n.parents[0], n.grad.cwiseProduct(n.parents[1]->value));
    accum(*n.parents[1], n.grad.cwiseProduct(n.parents[0]->value));
  }));
}

Var scale(const Var& a, double s) {
  return Var(make_node(a.value() * s, {a.node()}, [s](Node& n) { accum(*n.parents[0], n.grad * s); }));
}

Var add_scalar(const Var& a, double s) {
  return Var(make_node(a.value().array() + s, {a.node()}, [](Node& n) { accum(*n.parents[0], n.grad); }));
}

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) throw Error(ErrorCode::ShapeMismatch, "matmul inner dims differ");
  return Var(make_node(a.value() * b.value(), {a.node(), b.node()}, [](Node& n) {
    accum(*n.parents[0], n.grad * n.parents[1]->value.transpose());
    accum(*n.parents[1], n.parents[0]->value.transpose() * n.grad);
  }));
}

Var matmul_nt(const Var& a, const Var& b) {
  if (a.cols() != b.cols()) throw Error(ErrorCode::ShapeMismatch, "matmul_nt inner dims differ");
  return Var(make_node(a.value() * b.value().transpose(), {a.node(), b.node()}, [](Node& n) {
    accum(*n.parents[0], n.grad * n.parents[1]->value);
    accum(*n.parents[1], n.grad.transpose() * n.parents[0]->value);
  }));
}

Var div_guarded(const Var& a, const Var& b, double eps) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::ShapeMismatch, "div shapes differ");
  Mat v(a.rows(), a.cols());
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    for (Eigen::Index j = 0; j < v.cols(); ++j)
      v(i, j) = std::abs(b.value()(i, j)) <= eps ? 0.0 : a.value()(i, j) / b.value()(i, j);
  return Var(make_node(std::move(v), {a.node(), b.node()}, [eps](Node& n) {
    const Mat& av = n.parents[0]->value;
    const Mat& bv = n.parents[1]->value;
    Mat ga = Mat::Zero(av.rows(), av.cols());
    Mat gb = Mat::Zero(av.rows(), av.cols());
    for (Eigen::Index i = 0; i < av.rows(); ++i)
      for (Eigen::Index j = 0; j < av.cols(); ++j) {
        if (std::abs(bv(i, j)) <= eps) continue;
        ga(i, j) = n.grad(i, j) / bv(i, j);
        gb(i, j) = -n.grad(i, j) * av(i, j) / (bv(i, j) * bv(i, j));
      }
    accum(*n.parents[0], ga);
    accum(*n.parents[1], gb);
  }));
}

Var leaky_relu(const Var& a, double slope) {
  Mat v = a.value().unaryExpr([slope](double x) { return x > 0.0 ? x : slope * x; });
  return Var(make_node(std::move(v), {a.node()}, [slope](Node& n) {
    const Mat& x = n.parents[0]->value;
    Mat g = n.grad;
    for (Eigen::Index i = 0; i < g.rows(); ++i)
      for (Eigen::Index j = 0; j < g.cols(); ++j)
        if (x(i, j) <= 0.0) g(i, j) *= slope;
    accum(*n.parents[0], g);
  }));
}

Var softmax_rows(const Var& a) {
  Mat v = a.value();
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    const double m = v.row(i).maxCoeff();
    v.row(i) = (v.row(i).array() - m).exp();
    v.row(i) /= v.row(i).sum();
  }
  return Var(make_node(std::move(v), {a.node()}, [](Node& n) {
    const Mat& y = n.value;
    Mat g(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double dot = n.grad.row(i).dot(y.row(i));
      g.row(i) = y.row(i).cwiseProduct((n.grad.row(i).array() - dot).matrix());
    }
    accum(*n.parents[0], g);
  }));
}

Var layer_norm_rows(const Var& a, const Var& gain, const Var& bias, double eps) {
  const Eigen::Index c = a.cols();
  if (gain.cols() != c || bias.cols() != c || gain.rows() != 1 || bias.rows() != 1)
    throw Error(ErrorCode::ShapeMismatch, "layer_norm gain/bias must be 1xC");
  Mat xhat(a.rows(), c);
  Eigen::VectorXd inv_std(a.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    const double mean = a.value().row(i).mean();
    const double var = (a.value().row(i).array() - mean).square().mean();
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (a.value().row(i).array() - mean) * inv_std[i];
  }
  Mat v = xhat;
  for (Eigen::Index i = 0; i < v.rows(); ++i)
    v.row(i) = v.row(i).cwiseProduct(gain.value().row(0)) + bias.value().row(0);
  auto xhat_ptr = std::make_shared<Mat>(std::move(xhat));
  auto inv_ptr = std::make_shared<Eigen::VectorXd>(std::move(inv_std));
  return Var(make_node(std::move(v), {a.node(), gain.node(), bias.node()}, [xhat_ptr, inv_ptr](Node& n) {
    const Mat& xh = *xhat_ptr;
    const Eigen::VectorXd& inv = *inv_ptr;
    const Mat& g = n.parents[1]->value;  // 1xC gain
    const Eigen::Index c = xh.cols();
    if (n.parents[1]->requires_grad)
      n.parents[1]->ensure_grad() += (n.grad.cwiseProduct(xh)).colwise().sum();
    if (n.parents[2]->requires_grad) n.parents[2]->ensure_grad() += n.grad.colwise().sum();
    if (n.parents[0]->requires_grad) {
      Mat gx(xh.rows(), c);
      for (Eigen::Index i = 0; i < xh.rows(); ++i) {
        const Eigen::RowVectorXd dy = n.grad.row(i).cwiseProduct(g.row(0));
        const double s1 = dy.sum();
        const double s2 = dy.dot(xh.row(i));
        gx.row(i) =
            inv[i] * (dy.array() - s1 / static_cast<double>(c) - xh.row(i).array() * s2 / static_cast<double>(c));
      }
      n.parents[0]->ensure_grad() += gx;
    }
  }));
}

Var l2_normalize_rows(const Var& a, double eps) {
  Mat v = a.value();
  Eigen::VectorXd norms(v.rows());
  for (Eigen::Index i = 0; i < v.rows(); ++i) {
    norms[i] = std::max(v.row(i).norm(), eps);
    v.row(i) /= norms[i];
  }
  auto norm_ptr = std::make_shared<Eigen::VectorXd>(std::move(norms));
  return Var(make_node(std::move(v), {a.node()}, [norm_ptr](Node& n) {
    const Mat& y = n.value;
    Mat g(y.rows(), y.cols());
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      const double dot = n.grad.row(i).dot(y.row(i));
      g.row(i) = (n.grad.row(i) - dot * y.row(i)) / (*norm_ptr)[i];
    }
    accum(*n.parents[0], g);
  }));
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
  const Eigen::Index rows = parts[0].rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw Error(ErrorCode::ShapeMismatch, "concat_cols row counts differ");
    cols += p.cols();
  }
  Mat v(rows, cols);
  std::vector<NodePtr> parents;
  Eigen::Index at = 0;
  std::vector<Eigen::Index> offsets;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    offsets.push_back(at);
    at += p.cols();
    parents.push_back(p.node());
  }
  return Var(make_node(std::move(v), std::move(parents), [offsets](Node& n) {
    for (size_t k = 0; k < n.parents.size(); ++k)
      accum(*n.parents[k], n.grad.middleCols(offsets[k], n.parents[k]->value.cols()));
  }));
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw Error(ErrorCode::ShapeMismatch, "concat of nothing");
  const Eigen::Index cols = parts[0].cols();
  Eigen::Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw Error(ErrorCode::ShapeMismatch, "concat_rows col counts differ");
    rows += p.rows();
  }
  Mat v(rows, cols);
  std::vector<NodePtr> parents;
  Eigen::Index at = 0;
  std::vector<Eigen::Index> offsets;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    offsets.push_back(at);
    at += p.rows();
    parents.push_back(p.node());
  }
  return Var(make_node(std::move(v), std::move(parents), [offsets](Node& n) {
    for (size_t k = 0; k < n.parents.size(); ++k)
      accum(*n.parents[k], n.grad.middleRows(offsets[k], n.parents[k]->value.rows()));
  }));
}

Var slice_cols(const Var& a, Eigen::Index begin, Eigen::Index n_cols) {
  return Var(make_node(a.value().middleCols(begin, n_cols), {a.node()}, [begin, n_cols](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    n.parents[0]->ensure_grad().middleCols(begin, n_cols) += n.grad;
  }));
}

Var gather_rows(const Var& a, std::vector<int> idx) {
  Mat v(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (size_t i = 0; i < idx.size(); ++i) v.row(static_cast<Eigen::Index>(i)) = a.value().row(idx[i]);
  auto idx_ptr = std::make_shared<std::vector<int>>(std::move(idx));
  return Var(make_node(std::move(v), {a.node()}, [idx_ptr](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Mat& g = n.parents[0]->ensure_grad();
    for (size_t i = 0; i < idx_ptr->size(); ++i) g.row((*idx_ptr)[i]) += n.grad.row(static_cast<Eigen::Index>(i));
  }));
}

Var gather_entries(const Var& a, std::vector<std::pair<int, int>> entries) {
  Mat v(static_cast<Eigen::Index>(entries.size()), 1);
  for (size_t i = 0; i < entries.size(); ++i)
    v(static_cast<Eigen::Index>(i), 0) = a.value()(entries[i].first, entries[i].second);
  auto e = std::make_shared<std::vector<std::pair<int, int>>>(std::move(entries));
  return Var(make_node(std::move(v), {a.node()}, [e](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Mat& g = n.parents[0]->ensure_grad();
    for (size_t i = 0; i < e->size(); ++i)
      g((*e)[i].first, (*e)[i].second) += n.grad(static_cast<Eigen::Index>(i), 0);
  }));
}

Var interp_rows(const Var& a, std::vector<std::vector<int>> idx,
                std::vector<std::vector<double>> weights) {
  if (idx.size() != weights.size()) throw Error(ErrorCode::ShapeMismatch, "interp sizes differ");
  Mat v = Mat::Zero(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (size_t i = 0; i < idx.size(); ++i)
    for (size_t t = 0; t < idx[i].size(); ++t)
      v.row(static_cast<Eigen::Index>(i)) += weights[i][t] * a.value().row(idx[i][t]);
  auto idx_ptr = std::make_shared<std::vector<std::vector<int>>>(std::move(idx));
  auto w_ptr = std::make_shared<std::vector<std::vector<double>>>(std::move(weights));
  return Var(make_node(std::move(v), {a.node()}, [idx_ptr, w_ptr](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Mat& g = n.parents[0]->ensure_grad();
    for (size_t i = 0; i < idx_ptr->size(); ++i)
      for (size_t t = 0; t < (*idx_ptr)[i].size(); ++t)
        g.row((*idx_ptr)[i][t]) += (*w_ptr)[i][t] * n.grad.row(static_cast<Eigen::Index>(i));
  }));
}

Var segment_rows_max(const Var& a, int group) {
  if (group < 1 || a.rows() % group != 0)
    throw Error(ErrorCode::ShapeMismatch, "segment_rows_max group must divide rows");
  const Eigen::Index out_rows = a.rows() / group;
  Mat v(out_rows, a.cols());
  auto argmax = std::make_shared<Eigen::MatrixXi>(out_rows, a.cols());
  for (Eigen::Index i = 0; i < out_rows; ++i)
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      double best = a.value()(i * group, j);
      int best_r = static_cast<int>(i * group);
      for (int k = 1; k < group; ++k) {
        const double x = a.value()(i * group + k, j);
        if (x > best) {
          best = x;
          best_r = static_cast<int>(i * group + k);
        }
      }
      v(i, j) = best;
      (*argmax)(i, j) = best_r;
    }
  return Var(make_node(std::move(v), {a.node()}, [argmax](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Mat& g = n.parents[0]->ensure_grad();
    for (Eigen::Index i = 0; i < n.value.rows(); ++i)
      for (Eigen::Index j = 0; j < n.value.cols(); ++j) g((*argmax)(i, j), j) += n.grad(i, j);
  }));
}

Var max_over_rows(const Var& a) {
  Mat v(1, a.cols());
  auto argmax = std::make_shared<std::vector<int>>(a.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    Eigen::Index r;
    v(0, j) = a.value().col(j).maxCoeff(&r);
    (*argmax)[static_cast<size_t>(j)] = static_cast<int>(r);
  }
  return Var(make_node(std::move(v), {a.node()}, [argmax](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Mat& g = n.parents[0]->ensure_grad();
    for (Eigen::Index j = 0; j < n.value.cols(); ++j) g((*argmax)[static_cast<size_t>(j)], j) += n.grad(0, j);
  }));
}

Var sum_all(const Var& a) {
  Mat v(1, 1);
  v(0, 0) = a.value().sum();
  return Var(make_node(std::move(v), {a.node()}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    n.parents[0]->ensure_grad().array() += n.grad(0, 0);
  }));
}

Var mean_all(const Var& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.value().size())); }

Var row_sqnorm(const Var& a) {
  Mat v(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) v(i, 0) = a.value().row(i).squaredNorm();
  return Var(make_node(std::move(v), {a.node()}, [](Node& n) {
    if (!n.parents[0]->requires_grad) return;
    Mat& g = n.parents[0]->ensure_grad();
    for (Eigen::Index i = 0; i < g.rows(); ++i) g.row(i) += 2.0 * n.grad(i, 0) * n.parents[0]->value.row(i);
  }));
}

double scalar(const Var& a) {
  if (a.value().size() != 1) throw Error(ErrorCode::ShapeMismatch, "not a scalar");
  return a.value()(0, 0);
}

}  // namespace catpose::ad
