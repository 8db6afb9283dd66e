#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "evacast/rng.hpp"

namespace evacast {

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (const std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

struct TensorNode {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  bool traced = false;         // this node or an ancestor requires grad
  bool backward_done = false;  // set on a loss node once consumed
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  }
};

}  // namespace detail

// Dense row-major tensor of doubles with reverse-mode autodiff. Copies are
// shallow (handles to the same node); operations record a dynamic tape of
// parent links that backward() replays in reverse topological order.
//
// Gradient contract: backward() may be called once per loss node and throws
// on reuse. Gradients accumulate into .grad() across distinct losses until
// zero_grad() clears them.
class Tensor {
 public:
  Tensor() : node_(std::make_shared<detail::TensorNode>()) {}

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : node_(std::make_shared<detail::TensorNode>()) {
    if (shape_numel(shape) != values.size())
      throw ShapeError("tensor: shape " + shape_str(shape) + " does not match " +
                       std::to_string(values.size()) + " values");
    node_->shape = std::move(shape);
    node_->values = std::move(values);
    node_->requires_grad = requires_grad;
    node_->traced = requires_grad;
    check_finite("construct");
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, v), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
  }

  // Uniform init in [lo, hi); used by the model initializers.
  static Tensor uniform(Shape shape, double lo, double hi, Rng& rng,
                        bool requires_grad = false) {
    const std::size_t n = shape_numel(shape);
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = rng.uniform(lo, hi);
    return Tensor(std::move(shape), std::move(v), requires_grad);
  }

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->values.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

  const std::vector<double>& values() const { return node_->values; }

  // In-place mutation of a leaf (parameter) tensor. Mutating a recorded
  // intermediate would corrupt the tape, so only leaves allow it.
  std::vector<double>& mutable_values() {
    if (node_->backprop)
      throw std::logic_error("tensor: cannot mutate a recorded intermediate");
    return node_->values;
  }

  double value() const {
    if (size() != 1) throw ShapeError("tensor: value() requires a scalar, got " + shape_str(shape()));
    return node_->values[0];
  }

  double at(std::size_t r, std::size_t c) const {
    if (rank() != 2) throw ShapeError("tensor: at(r,c) requires rank 2");
    return node_->values[r * dim(1) + c];
  }

  bool requires_grad() const { return node_->requires_grad; }

  void set_requires_grad(bool b) {
    node_->requires_grad = b;
    node_->traced = b || node_->traced;
  }

  bool has_grad() const { return node_->grad.size() == node_->values.size(); }

  const std::vector<double>& grad() const {
    if (!has_grad()) throw std::logic_error("tensor: gradient not populated");
    return node_->grad;
  }

  void zero_grad() { node_->grad.assign(node_->values.size(), 0.0); }
  void clear_grad() { node_->grad.clear(); }

  bool same_node(const Tensor& other) const { return node_ == other.node_; }

  // --- tape machinery -------------------------------------------------

  detail::TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<detail::TensorNode>& node_ptr() const { return node_; }

  static Tensor make_result(Shape shape, std::vector<double> values,
                            std::vector<Tensor> parents,
                            std::function<void(detail::TensorNode&)> backprop,
                            const char* op_name) {
    Tensor out(std::move(shape), std::move(values));
    out.check_finite(op_name);
    bool traced = false;
    for (const Tensor& p : parents) traced = traced || p.node_->traced;
    if (traced) {
      out.node_->traced = true;
      out.node_->parents.reserve(parents.size());
      for (const Tensor& p : parents) out.node_->parents.push_back(p.node_);
      out.node_->backprop = std::move(backprop);
    }
    return out;
  }

  void check_finite(const char* op_name) const {
    for (const double v : node_->values)
      if (!std::isfinite(v))
        throw std::runtime_error(std::string("tensor: non-finite value produced by ") + op_name);
  }

 private:
  std::shared_ptr<detail::TensorNode> node_;
};

namespace detail {

inline void accumulate(TensorNode& parent, const std::vector<double>& contrib) {
  parent.ensure_grad();
  for (std::size_t i = 0; i < contrib.size(); ++i) parent.grad[i] += contrib[i];
}

}  // namespace detail

// --- operations ---------------------------------------------------------

// Standard matrix product, rank-2 only.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: operands must be rank 2, got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.values().data();
  const double* pb = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = pa[i * k + kk];
      if (aik == 0.0) continue;
      const double* brow = pb + kk * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
    }
  }
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return Tensor::make_result(
      {m, n}, std::move(out), {a, b},
      [an, bn, m, k, n](detail::TensorNode& node) {
        const std::vector<double>& g = node.grad;
        if (an->traced) {
          std::vector<double> da(m * k, 0.0);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const double gij = g[i * n + j];
              if (gij == 0.0) continue;
              for (std::size_t kk = 0; kk < k; ++kk)
                da[i * k + kk] += gij * bn->values[kk * n + j];
            }
          detail::accumulate(*an, da);
        }
        if (bn->traced) {
          std::vector<double> db(k * n, 0.0);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t kk = 0; kk < k; ++kk) {
              const double aik = an->values[i * k + kk];
              if (aik == 0.0) continue;
              for (std::size_t j = 0; j < n; ++j) db[kk * n + j] += aik * g[i * n + j];
            }
          detail::accumulate(*bn, db);
        }
      },
      "matmul");
}

namespace detail {

inline bool row_broadcastable(const Tensor& a, const Tensor& b) {
  return a.rank() == 2 && b.rank() == 1 && b.dim(0) == a.dim(1);
}

}  // namespace detail

// Elementwise sum. Also accepts a rank-1 right operand broadcast across the
// rows of a rank-2 left operand (the bias case); no other broadcasting.
inline Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    auto an = a.node_ptr();
    auto bn = b.node_ptr();
    return Tensor::make_result(
        a.shape(), std::move(out), {a, b},
        [an, bn](detail::TensorNode& node) {
          if (an->traced) detail::accumulate(*an, node.grad);
          if (bn->traced) detail::accumulate(*bn, node.grad);
        },
        "add");
  }
  if (detail::row_broadcastable(a, b)) {
    const std::size_t rows = a.dim(0), cols = a.dim(1);
    std::vector<double> out(a.size());
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        out[r * cols + c] = a.values()[r * cols + c] + b.values()[c];
    auto an = a.node_ptr();
    auto bn = b.node_ptr();
    return Tensor::make_result(
        a.shape(), std::move(out), {a, b},
        [an, bn, rows, cols](detail::TensorNode& node) {
          if (an->traced) detail::accumulate(*an, node.grad);
          if (bn->traced) {
            std::vector<double> db(cols, 0.0);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t c = 0; c < cols; ++c) db[c] += node.grad[r * cols + c];
            detail::accumulate(*bn, db);
          }
        },
        "add");
  }
  throw ShapeError("add: incompatible shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()));
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("sub: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return Tensor::make_result(
      a.shape(), std::move(out), {a, b},
      [an, bn](detail::TensorNode& node) {
        if (an->traced) detail::accumulate(*an, node.grad);
        if (bn->traced) {
          bn->ensure_grad();
          for (std::size_t i = 0; i < node.grad.size(); ++i) bn->grad[i] -= node.grad[i];
        }
      },
      "sub");
}

// Hadamard product, identical shapes only.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return Tensor::make_result(
      a.shape(), std::move(out), {a, b},
      [an, bn](detail::TensorNode& node) {
        if (an->traced) {
          std::vector<double> da(node.grad.size());
          for (std::size_t i = 0; i < da.size(); ++i) da[i] = node.grad[i] * bn->values[i];
          detail::accumulate(*an, da);
        }
        if (bn->traced) {
          std::vector<double> db(node.grad.size());
          for (std::size_t i = 0; i < db.size(); ++i) db[i] = node.grad[i] * an->values[i];
          detail::accumulate(*bn, db);
        }
      },
      "mul");
}

inline Tensor scale(const Tensor& a, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
  auto an = a.node_ptr();
  return Tensor::make_result(
      a.shape(), std::move(out), {a},
      [an, s](detail::TensorNode& node) {
        if (!an->traced) return;
        std::vector<double> da(node.grad.size());
        for (std::size_t i = 0; i < da.size(); ++i) da[i] = node.grad[i] * s;
        detail::accumulate(*an, da);
      },
      "scale");
}

inline Tensor sigmoid(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x = a.values()[i];
    out[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
  }
  auto an = a.node_ptr();
  return Tensor::make_result(
      a.shape(), std::move(out), {a},
      [an](detail::TensorNode& node) {
        if (!an->traced) return;
        std::vector<double> da(node.grad.size());
        for (std::size_t i = 0; i < da.size(); ++i) {
          const double y = node.values[i];
          da[i] = node.grad[i] * y * (1.0 - y);
        }
        detail::accumulate(*an, da);
      },
      "sigmoid");
}

inline Tensor tanh_op(const Tensor& a) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(a.values()[i]);
  auto an = a.node_ptr();
  return Tensor::make_result(
      a.shape(), std::move(out), {a},
      [an](detail::TensorNode& node) {
        if (!an->traced) return;
        std::vector<double> da(node.grad.size());
        for (std::size_t i = 0; i < da.size(); ++i) {
          const double y = node.values[i];
          da[i] = node.grad[i] * (1.0 - y * y);
        }
        detail::accumulate(*an, da);
      },
      "tanh");
}

// Column-wise concatenation of two rank-2 tensors with equal row counts.
inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(0) != b.dim(0))
    throw ShapeError("concat_cols: incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const std::size_t rows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
  std::vector<double> out(rows * (ca + cb));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < ca; ++c) out[r * (ca + cb) + c] = a.values()[r * ca + c];
    for (std::size_t c = 0; c < cb; ++c) out[r * (ca + cb) + ca + c] = b.values()[r * cb + c];
  }
  auto an = a.node_ptr();
  auto bn = b.node_ptr();
  return Tensor::make_result(
      {rows, ca + cb}, std::move(out), {a, b},
      [an, bn, rows, ca, cb](detail::TensorNode& node) {
        if (an->traced) {
          std::vector<double> da(rows * ca);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < ca; ++c) da[r * ca + c] = node.grad[r * (ca + cb) + c];
          detail::accumulate(*an, da);
        }
        if (bn->traced) {
          std::vector<double> db(rows * cb);
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t c = 0; c < cb; ++c)
              db[r * cb + c] = node.grad[r * (ca + cb) + ca + c];
          detail::accumulate(*bn, db);
        }
      },
      "concat_cols");
}

inline Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (const double v : a.values()) s += v;
  auto an = a.node_ptr();
  return Tensor::make_result(
      {1}, {s}, {a},
      [an](detail::TensorNode& node) {
        if (!an->traced) return;
        an->ensure_grad();
        const double g = node.grad[0];
        for (double& v : an->grad) v += g;
      },
      "sum");
}

inline Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.size());
  double s = 0.0;
  for (const double v : a.values()) s += v;
  auto an = a.node_ptr();
  return Tensor::make_result(
      {1}, {s / n}, {a},
      [an, n](detail::TensorNode& node) {
        if (!an->traced) return;
        an->ensure_grad();
        const double g = node.grad[0] / n;
        for (double& v : an->grad) v += g;
      },
      "mean");
}

// Mean of squared elementwise differences. d/dpred = 2(pred - target)/N.
inline Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape())
    throw ShapeError("mse_loss: incompatible shapes " + shape_str(pred.shape()) + " and " +
                     shape_str(target.shape()));
  const double n = static_cast<double>(pred.size());
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred.values()[i] - target.values()[i];
    s += d * d;
  }
  auto pn = pred.node_ptr();
  auto tn = target.node_ptr();
  return Tensor::make_result(
      {1}, {s / n}, {pred, target},
      [pn, tn, n](detail::TensorNode& node) {
        const double g = node.grad[0];
        if (pn->traced) {
          std::vector<double> dp(pn->values.size());
          for (std::size_t i = 0; i < dp.size(); ++i)
            dp[i] = g * 2.0 * (pn->values[i] - tn->values[i]) / n;
          detail::accumulate(*pn, dp);
        }
        if (tn->traced) {
          std::vector<double> dt(tn->values.size());
          for (std::size_t i = 0; i < dt.size(); ++i)
            dt[i] = -g * 2.0 * (pn->values[i] - tn->values[i]) / n;
          detail::accumulate(*tn, dt);
        }
      },
      "mse_loss");
}

// Reverse-mode sweep from a scalar loss. Populates .grad() on every traced
// ancestor; throws if called twice on the same loss node.
inline void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw std::logic_error("backward: loss must be scalar, got " + shape_str(loss.shape()));
  detail::TensorNode* root = loss.node();
  if (root->backward_done) throw std::logic_error("backward: already called on this loss");
  root->backward_done = true;
  if (!root->traced) return;  // loss has no differentiable ancestors

  // Iterative post-order DFS to get a topological order.
  std::vector<detail::TensorNode*> topo;
  std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
  std::unordered_set<detail::TensorNode*> seen;
  stack.push_back({root, 0});
  seen.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::TensorNode* p = node->parents[next++].get();
      if (p->traced && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
    detail::TensorNode* node = *it;
    if (node->backprop && node->grad.size() == node->values.size()) node->backprop(*node);
  }
}

}  // namespace evacast
