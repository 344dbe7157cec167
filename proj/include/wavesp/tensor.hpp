#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "wavesp/rng.hpp"

namespace wavesp {

// Raised when a computation produces non-finite values where finite ones
// are required (grad checks, training loss).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int>;

inline size_t numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) n *= static_cast<size_t>(d);
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

inline void check_arg(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grad.
  std::function<void(Node&)> backward_fn;

  void accumulate(const std::vector<double>& g) {
    if (grad.empty()) grad.assign(value.size(), 0.0);
    for (size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
  }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

// Tape recording is suspended inside a NoGradGuard scope.
inline bool& grad_mode() {
  thread_local bool enabled = true;
  return enabled;
}

}  // namespace detail

// Disables tape construction for the enclosing scope (eval-mode forwards).
struct NoGradGuard {
  NoGradGuard() : prev_(detail::grad_mode()) { detail::grad_mode() = false; }
  ~NoGradGuard() { detail::grad_mode() = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dense row-major tensor of doubles with an optional reverse-mode tape.
// Tensor is a cheap shared handle; copies alias the same node.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return make_leaf(std::move(shape), 0.0, requires_grad);
  }

  static Tensor full(Shape shape, double v, bool requires_grad = false) {
    return make_leaf(std::move(shape), v, requires_grad);
  }

  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false) {
    check_arg(numel(shape) == data.size(),
              "tensor: data length " + std::to_string(data.size()) +
                  " does not match shape " + shape_str(shape));
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  static Tensor randn(Shape shape, RngStream& rng, double stddev = 1.0,
                      bool requires_grad = false) {
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value.resize(numel(n->shape));
    for (double& v : n->value) v = stddev * rng.normal();
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int ndim() const { return static_cast<int>(node_->shape.size()); }
  size_t size() const { return node_->value.size(); }

  const std::vector<double>& value() const { return node_->value; }
  std::vector<double>& value() { return node_->value; }
  double item() const {
    check_arg(size() == 1, "item: tensor " + shape_str(shape()) + " is not scalar");
    return node_->value[0];
  }
  double at(int i) const { return node_->value[static_cast<size_t>(i)]; }
  double at(int i, int j) const {
    return node_->value[static_cast<size_t>(i) * dim(1) + j];
  }
  void set(int i, double v) { node_->value[static_cast<size_t>(i)] = v; }
  void set(int i, int j, double v) {
    node_->value[static_cast<size_t>(i) * dim(1) + j] = v;
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

  const char* op_kind() const { return node_->op; }

  // Same values, severed from the tape.
  Tensor detach() const {
    auto n = std::make_shared<detail::Node>();
    n->shape = node_->shape;
    n->value = node_->value;
    return Tensor(std::move(n));
  }

  bool all_finite() const {
    for (double v : node_->value)
      if (!std::isfinite(v)) return false;
    return true;
  }

  // Reverse-mode sweep from a scalar. Gradients accumulate additively into
  // every reachable requires_grad tensor; call zero_grad first if stale
  // gradients may be present.
  void backward() const {
    check_arg(size() == 1,
              "backward: loss must be scalar, got " + shape_str(shape()));
    std::vector<detail::Node*> order;
    topo_sort(node_.get(), order);
    node_->ensure_grad();
    node_->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      detail::Node* n = *it;
      if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
  }

  std::shared_ptr<detail::Node> node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}

 private:
  static Tensor make_leaf(Shape shape, double fill, bool requires_grad) {
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value.assign(numel(n->shape), fill);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  // Iterative DFS; parents before children in `order`.
  static void topo_sort(detail::Node* root, std::vector<detail::Node*>& order) {
    std::unordered_set<detail::Node*> visited;
    std::vector<std::pair<detail::Node*, size_t>> stack;
    stack.emplace_back(root, 0);
    visited.insert(root);
    while (!stack.empty()) {
      auto& [n, i] = stack.back();
      if (i < n->parents.size()) {
        detail::Node* p = n->parents[i++].get();
        if (visited.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(n);
        stack.pop_back();
      }
    }
  }

  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor make_op(const char* op, Shape shape, std::vector<double> value,
                      std::vector<Tensor> inputs,
                      std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  bool rg = false;
  for (const Tensor& t : inputs) rg = rg || t.requires_grad();
  if (rg && grad_mode()) {
    n->requires_grad = true;
    n->parents.reserve(inputs.size());
    for (const Tensor& t : inputs) n->parents.push_back(t.node());
    n->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(n));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra ops
// ---------------------------------------------------------------------------

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check_arg(a.shape() == b.shape(), std::string(op) + ": shape mismatch " +
                                        shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op("add", a.shape(), std::move(out), {a, b},
                         [pa, pb](detail::Node& n) {
                           if (pa->requires_grad) pa->accumulate(n.grad);
                           if (pb->requires_grad) pb->accumulate(n.grad);
                         });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op("sub", a.shape(), std::move(out), {a, b},
                         [pa, pb](detail::Node& n) {
                           if (pa->requires_grad) pa->accumulate(n.grad);
                           if (pb->requires_grad) {
                             if (pb->grad.empty()) pb->grad.assign(pb->value.size(), 0.0);
                             for (size_t i = 0; i < n.grad.size(); ++i)
                               pb->grad[i] -= n.grad[i];
                           }
                         });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  auto pa = a.node(), pb = b.node();
  return detail::make_op("mul", a.shape(), std::move(out), {a, b},
                         [pa, pb](detail::Node& n) {
                           if (pa->requires_grad) {
                             pa->ensure_grad();
                             for (size_t i = 0; i < n.grad.size(); ++i)
                               pa->grad[i] += n.grad[i] * pb->value[i];
                           }
                           if (pb->requires_grad) {
                             pb->ensure_grad();
                             for (size_t i = 0; i < n.grad.size(); ++i)
                               pb->grad[i] += n.grad[i] * pa->value[i];
                           }
                         });
}

inline Tensor scale(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * c;
  auto pa = a.node();
  return detail::make_op("scale", a.shape(), std::move(out), {a},
                         [pa, c](detail::Node& n) {
                           pa->ensure_grad();
                           for (size_t i = 0; i < n.grad.size(); ++i)
                             pa->grad[i] += n.grad[i] * c;
                         });
}

inline Tensor add_scalar(const Tensor& a, double c) {
  std::vector<double> out(a.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + c;
  auto pa = a.node();
  return detail::make_op("add_scalar", a.shape(), std::move(out), {a},
                         [pa](detail::Node& n) { pa->accumulate(n.grad); });
}

// X (m,n) plus a length-n vector broadcast over rows.
inline Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  check_arg(x.ndim() == 2 && v.ndim() == 1 && x.dim(1) == v.dim(0),
            "add_rowvec: incompatible shapes " + shape_str(x.shape()) + " and " +
                shape_str(v.shape()));
  const int m = x.dim(0), n = x.dim(1);
  std::vector<double> out(x.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(i) * n + j] = x.at(i, j) + v.at(j);
  auto px = x.node(), pv = v.node();
  return detail::make_op("add_rowvec", x.shape(), std::move(out), {x, v},
                         [px, pv, m, n](detail::Node& nd) {
                           if (px->requires_grad) px->accumulate(nd.grad);
                           if (pv->requires_grad) {
                             pv->ensure_grad();
                             for (int i = 0; i < m; ++i)
                               for (int j = 0; j < n; ++j)
                                 pv->grad[j] += nd.grad[static_cast<size_t>(i) * n + j];
                           }
                         });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  check_arg(a.ndim() == 2 && b.ndim() == 2,
            "matmul: expects rank-2 operands, got " + shape_str(a.shape()) +
                " and " + shape_str(b.shape()));
  check_arg(a.dim(1) == b.dim(0), "matmul: inner dimensions disagree, " +
                                      shape_str(a.shape()) + " x " +
                                      shape_str(b.shape()));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  const double* A = a.value().data();
  const double* B = b.value().data();
  for (int i = 0; i < m; ++i) {
    double* orow = out.data() + static_cast<size_t>(i) * n;
    const double* arow = A + static_cast<size_t>(i) * k;
    for (int kk = 0; kk < k; ++kk) {
      const double av = arow[kk];
      const double* brow = B + static_cast<size_t>(kk) * n;
      for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  auto pa = a.node(), pb = b.node();
  return detail::make_op(
      "matmul", {m, n}, std::move(out), {a, b}, [pa, pb, m, k, n](detail::Node& nd) {
        const double* G = nd.grad.data();
        if (pa->requires_grad) {
          pa->ensure_grad();  // dA = G * B^T
          for (int i = 0; i < m; ++i)
            for (int kk = 0; kk < k; ++kk) {
              double s = 0.0;
              const double* grow = G + static_cast<size_t>(i) * n;
              const double* brow = pb->value.data() + static_cast<size_t>(kk) * n;
              for (int j = 0; j < n; ++j) s += grow[j] * brow[j];
              pa->grad[static_cast<size_t>(i) * k + kk] += s;
            }
        }
        if (pb->requires_grad) {
          pb->ensure_grad();  // dB = A^T * G
          for (int kk = 0; kk < k; ++kk) {
            double* brow = pb->grad.data() + static_cast<size_t>(kk) * n;
            for (int i = 0; i < m; ++i) {
              const double av = pa->value[static_cast<size_t>(i) * k + kk];
              const double* grow = G + static_cast<size_t>(i) * n;
              for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
            }
          }
        }
      });
}

inline Tensor transpose(const Tensor& a) {
  check_arg(a.ndim() == 2, "transpose: expects rank-2, got " + shape_str(a.shape()));
  const int m = a.dim(0), n = a.dim(1);
  std::vector<double> out(a.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(j) * m + i] = a.at(i, j);
  auto pa = a.node();
  return detail::make_op("transpose", {n, m}, std::move(out), {a},
                         [pa, m, n](detail::Node& nd) {
                           pa->ensure_grad();
                           for (int i = 0; i < m; ++i)
                             for (int j = 0; j < n; ++j)
                               pa->grad[static_cast<size_t>(i) * n + j] +=
                                   nd.grad[static_cast<size_t>(j) * m + i];
                         });
}

// Concatenation of rank-2 tensors along axis 0 or 1.
inline Tensor concat(int axis, const std::vector<Tensor>& parts) {
  check_arg(!parts.empty(), "concat: no inputs");
  check_arg(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
  const int other = 1 - axis;
  int total = 0;
  for (const Tensor& t : parts) {
    check_arg(t.ndim() == 2, "concat: expects rank-2 inputs");
    check_arg(t.dim(other) == parts[0].dim(other),
              "concat: mismatched shapes " + shape_str(parts[0].shape()) +
                  " vs " + shape_str(t.shape()));
    total += t.dim(axis);
  }
  Shape shape = parts[0].shape();
  shape[static_cast<size_t>(axis)] = total;
  const int rows = shape[0], cols = shape[1];
  std::vector<double> out(static_cast<size_t>(rows) * cols);
  std::vector<int> offsets;
  int off = 0;
  for (const Tensor& t : parts) {
    offsets.push_back(off);
    const int tr = t.dim(0), tc = t.dim(1);
    for (int i = 0; i < tr; ++i)
      for (int j = 0; j < tc; ++j) {
        int oi = axis == 0 ? i + off : i;
        int oj = axis == 1 ? j + off : j;
        out[static_cast<size_t>(oi) * cols + oj] = t.at(i, j);
      }
    off += t.dim(axis);
  }
  std::vector<std::shared_ptr<detail::Node>> pnodes;
  for (const Tensor& t : parts) pnodes.push_back(t.node());
  return detail::make_op(
      "concat", shape, std::move(out), parts,
      [pnodes, offsets, axis, cols](detail::Node& nd) {
        for (size_t pi = 0; pi < pnodes.size(); ++pi) {
          auto& p = pnodes[pi];
          if (!p->requires_grad) continue;
          p->ensure_grad();
          const int tr = p->shape[0], tc = p->shape[1], off = offsets[pi];
          for (int i = 0; i < tr; ++i)
            for (int j = 0; j < tc; ++j) {
              int oi = axis == 0 ? i + off : i;
              int oj = axis == 1 ? j + off : j;
              p->grad[static_cast<size_t>(i) * tc + j] +=
                  nd.grad[static_cast<size_t>(oi) * cols + oj];
            }
        }
      });
}

// Half-open [start, stop) slice of a rank-2 tensor along one axis.
inline Tensor slice(const Tensor& x, int axis, int start, int stop) {
  check_arg(x.ndim() == 2, "slice: expects rank-2, got " + shape_str(x.shape()));
  check_arg(axis == 0 || axis == 1, "slice: axis must be 0 or 1");
  check_arg(0 <= start && start <= stop && stop <= x.dim(axis),
            "slice: range [" + std::to_string(start) + "," + std::to_string(stop) +
                ") out of bounds for axis length " + std::to_string(x.dim(axis)));
  const int m = x.dim(0), n = x.dim(1);
  Shape shape = x.shape();
  shape[static_cast<size_t>(axis)] = stop - start;
  std::vector<double> out(numel(shape));
  const int or_ = shape[0], oc = shape[1];
  for (int i = 0; i < or_; ++i)
    for (int j = 0; j < oc; ++j) {
      int si = axis == 0 ? i + start : i;
      int sj = axis == 1 ? j + start : j;
      out[static_cast<size_t>(i) * oc + j] = x.at(si, sj);
    }
  auto px = x.node();
  (void)m;
  return detail::make_op("slice", shape, std::move(out), {x},
                         [px, axis, start, n, or_, oc](detail::Node& nd) {
                           px->ensure_grad();
                           for (int i = 0; i < or_; ++i)
                             for (int j = 0; j < oc; ++j) {
                               int si = axis == 0 ? i + start : i;
                               int sj = axis == 1 ? j + start : j;
                               px->grad[static_cast<size_t>(si) * n + sj] +=
                                   nd.grad[static_cast<size_t>(i) * oc + j];
                             }
                         });
}

inline Tensor reverse_rows(const Tensor& x) {
  check_arg(x.ndim() == 2, "reverse_rows: expects rank-2, got " + shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  std::vector<double> out(x.size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j)
      out[static_cast<size_t>(m - 1 - i) * n + j] = x.at(i, j);
  auto px = x.node();
  return detail::make_op("reverse_rows", x.shape(), std::move(out), {x},
                         [px, m, n](detail::Node& nd) {
                           px->ensure_grad();
                           for (int i = 0; i < m; ++i)
                             for (int j = 0; j < n; ++j)
                               px->grad[static_cast<size_t>(i) * n + j] +=
                                   nd.grad[static_cast<size_t>(m - 1 - i) * n + j];
                         });
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

namespace detail {

template <typename Fwd, typename Dfn>
Tensor unary_elementwise(const char* op, const Tensor& x, Fwd f, Dfn dfdx) {
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(x.value()[i]);
  auto px = x.node();
  std::vector<double> saved = out;
  return make_op(op, x.shape(), std::move(out), {x},
                 [px, dfdx, saved](Node& nd) {
                   px->ensure_grad();
                   for (size_t i = 0; i < nd.grad.size(); ++i)
                     px->grad[i] += nd.grad[i] * dfdx(px->value[i], saved[i]);
                 });
}

}  // namespace detail

inline Tensor relu(const Tensor& x) {
  return detail::unary_elementwise(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_elementwise(
      "sigmoid", x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double y) { return y * (1.0 - y); });
}

inline Tensor silu(const Tensor& x) {
  return detail::unary_elementwise(
      "silu", x, [](double v) { return v / (1.0 + std::exp(-v)); },
      [](double v, double) {
        double s = 1.0 / (1.0 + std::exp(-v));
        return s * (1.0 + v * (1.0 - s));
      });
}

inline Tensor exp_t(const Tensor& x) {
  return detail::unary_elementwise("exp", x, [](double v) { return std::exp(v); },
                                   [](double, double y) { return y; });
}

inline Tensor softplus(const Tensor& x) {
  return detail::unary_elementwise(
      "softplus", x,
      [](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); },
      [](double v, double) { return 1.0 / (1.0 + std::exp(-v)); });
}

// Row-wise softmax of a rank-2 tensor.
inline Tensor softmax_rows(const Tensor& x) {
  check_arg(x.ndim() == 2, "softmax: expects rank-2, got " + shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  std::vector<double> out(x.size());
  for (int i = 0; i < m; ++i) {
    const double* row = x.value().data() + static_cast<size_t>(i) * n;
    double* orow = out.data() + static_cast<size_t>(i) * n;
    double mx = row[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, row[j]);
    double sum = 0.0;
    for (int j = 0; j < n; ++j) sum += (orow[j] = std::exp(row[j] - mx));
    for (int j = 0; j < n; ++j) orow[j] /= sum;
  }
  auto px = x.node();
  std::vector<double> saved = out;
  return detail::make_op("softmax", x.shape(), std::move(out), {x},
                         [px, saved, m, n](detail::Node& nd) {
                           px->ensure_grad();
                           for (int i = 0; i < m; ++i) {
                             const double* y = saved.data() + static_cast<size_t>(i) * n;
                             const double* g = nd.grad.data() + static_cast<size_t>(i) * n;
                             double dot = 0.0;
                             for (int j = 0; j < n; ++j) dot += g[j] * y[j];
                             double* gx = px->grad.data() + static_cast<size_t>(i) * n;
                             for (int j = 0; j < n; ++j) gx[j] += y[j] * (g[j] - dot);
                           }
                         });
}

// Row-wise layer normalization with affine parameters gamma, beta (length n).
inline Tensor layer_norm_rows(const Tensor& x, const Tensor& gamma,
                              const Tensor& beta, double eps = 1e-5) {
  check_arg(x.ndim() == 2, "layer_norm: expects rank-2, got " + shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  check_arg(gamma.ndim() == 1 && gamma.dim(0) == n && beta.ndim() == 1 &&
                beta.dim(0) == n,
            "layer_norm: gamma/beta must have length " + std::to_string(n));
  std::vector<double> out(x.size());
  std::vector<double> xhat(x.size());
  std::vector<double> inv_sigma(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) {
    const double* row = x.value().data() + static_cast<size_t>(i) * n;
    double mean = 0.0;
    for (int j = 0; j < n; ++j) mean += row[j];
    mean /= n;
    double var = 0.0;
    for (int j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= n;
    double is = 1.0 / std::sqrt(var + eps);
    inv_sigma[static_cast<size_t>(i)] = is;
    for (int j = 0; j < n; ++j) {
      double xh = (row[j] - mean) * is;
      xhat[static_cast<size_t>(i) * n + j] = xh;
      out[static_cast<size_t>(i) * n + j] = xh * gamma.at(j) + beta.at(j);
    }
  }
  auto px = x.node(), pg = gamma.node(), pb = beta.node();
  return detail::make_op(
      "layer_norm", x.shape(), std::move(out), {x, gamma, beta},
      [px, pg, pb, xhat, inv_sigma, m, n](detail::Node& nd) {
        for (int i = 0; i < m; ++i) {
          const double* g = nd.grad.data() + static_cast<size_t>(i) * n;
          const double* xh = xhat.data() + static_cast<size_t>(i) * n;
          if (px->requires_grad) {
            px->ensure_grad();
            double mean_gy = 0.0, mean_gy_xh = 0.0;
            for (int j = 0; j < n; ++j) {
              double gy = g[j] * pg->value[static_cast<size_t>(j)];
              mean_gy += gy;
              mean_gy_xh += gy * xh[j];
            }
            mean_gy /= n;
            mean_gy_xh /= n;
            double* gx = px->grad.data() + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) {
              double gy = g[j] * pg->value[static_cast<size_t>(j)];
              gx[j] += (gy - mean_gy - xh[j] * mean_gy_xh) *
                       inv_sigma[static_cast<size_t>(i)];
            }
          }
          if (pg->requires_grad) {
            pg->ensure_grad();
            for (int j = 0; j < n; ++j) pg->grad[static_cast<size_t>(j)] += g[j] * xh[j];
          }
          if (pb->requires_grad) {
            pb->ensure_grad();
            for (int j = 0; j < n; ++j) pb->grad[static_cast<size_t>(j)] += g[j];
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.value()) s += v;
  auto px = x.node();
  return detail::make_op("sum", {1}, {s}, {x}, [px](detail::Node& nd) {
    px->ensure_grad();
    for (double& g : px->grad) g += nd.grad[0];
  });
}

inline Tensor mean_all(const Tensor& x) {
  double s = 0.0;
  for (double v : x.value()) s += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  auto px = x.node();
  return detail::make_op("mean", {1}, {s * inv}, {x}, [px, inv](detail::Node& nd) {
    px->ensure_grad();
    for (double& g : px->grad) g += nd.grad[0] * inv;
  });
}

// Mean over rows of a rank-2 tensor; result shape (1, n).
inline Tensor mean_axis0(const Tensor& x) {
  check_arg(x.ndim() == 2, "mean_axis0: expects rank-2, got " + shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  std::vector<double> out(static_cast<size_t>(n), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out[static_cast<size_t>(j)] += x.at(i, j);
  for (double& v : out) v /= m;
  auto px = x.node();
  return detail::make_op("mean_axis0", {1, n}, std::move(out), {x},
                         [px, m, n](detail::Node& nd) {
                           px->ensure_grad();
                           const double inv = 1.0 / m;
                           for (int i = 0; i < m; ++i)
                             for (int j = 0; j < n; ++j)
                               px->grad[static_cast<size_t>(i) * n + j] +=
                                   nd.grad[static_cast<size_t>(j)] * inv;
                         });
}

// ---------------------------------------------------------------------------
// Convolution ops (periodic boundary, used by the wavelet filter banks)
// ---------------------------------------------------------------------------

// Per-row periodic correlation with downsampling:
//   y[i][j] = sum_t x[i][(stride*j + t) mod n] * f[t]
inline Tensor conv1d_periodic(const Tensor& x, const Tensor& f, int stride) {
  check_arg(x.ndim() == 2 && f.ndim() == 1,
            "conv1d: expects rank-2 input and rank-1 filter");
  const int m = x.dim(0), n = x.dim(1), L = f.dim(0);
  check_arg(stride >= 1, "conv1d: stride must be >= 1");
  check_arg(n % stride == 0, "conv1d: stride " + std::to_string(stride) +
                                 " must divide input length " + std::to_string(n));
  check_arg(L <= n, "conv1d: filter length " + std::to_string(L) +
                        " exceeds padded input length " + std::to_string(n));
  const int on = n / stride;
  std::vector<double> out(static_cast<size_t>(m) * on, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* row = x.value().data() + static_cast<size_t>(i) * n;
    double* orow = out.data() + static_cast<size_t>(i) * on;
    for (int j = 0; j < on; ++j) {
      double s = 0.0;
      for (int t = 0; t < L; ++t) s += row[(stride * j + t) % n] * f.at(t);
      orow[j] = s;
    }
  }
  auto px = x.node(), pf = f.node();
  return detail::make_op(
      "conv1d", {m, on}, std::move(out), {x, f},
      [px, pf, m, n, L, stride, on](detail::Node& nd) {
        if (px->requires_grad) px->ensure_grad();
        if (pf->requires_grad) pf->ensure_grad();
        for (int i = 0; i < m; ++i) {
          const double* g = nd.grad.data() + static_cast<size_t>(i) * on;
          const double* row = px->value.data() + static_cast<size_t>(i) * n;
          for (int j = 0; j < on; ++j) {
            for (int t = 0; t < L; ++t) {
              const int idx = (stride * j + t) % n;
              if (px->requires_grad)
                px->grad[static_cast<size_t>(i) * n + idx] += g[j] * pf->value[static_cast<size_t>(t)];
              if (pf->requires_grad) pf->grad[static_cast<size_t>(t)] += g[j] * row[idx];
            }
          }
        }
      });
}

// Adjoint of conv1d_periodic: upsample by `stride` then periodic convolution.
//   y[i][(stride*j + t) mod (stride*n)] += c[i][j] * f[t]
inline Tensor upconv1d_periodic(const Tensor& c, const Tensor& f, int stride) {
  check_arg(c.ndim() == 2 && f.ndim() == 1,
            "upconv1d: expects rank-2 input and rank-1 filter");
  const int m = c.dim(0), cn = c.dim(1), L = f.dim(0);
  check_arg(stride >= 1, "upconv1d: stride must be >= 1");
  const int n = cn * stride;
  check_arg(L <= n, "upconv1d: filter length " + std::to_string(L) +
                        " exceeds output length " + std::to_string(n));
  std::vector<double> out(static_cast<size_t>(m) * n, 0.0);
  for (int i = 0; i < m; ++i) {
    const double* crow = c.value().data() + static_cast<size_t>(i) * cn;
    double* orow = out.data() + static_cast<size_t>(i) * n;
    for (int j = 0; j < cn; ++j)
      for (int t = 0; t < L; ++t) orow[(stride * j + t) % n] += crow[j] * f.at(t);
  }
  auto pc = c.node(), pf = f.node();
  return detail::make_op(
      "upconv1d", {m, n}, std::move(out), {c, f},
      [pc, pf, m, n, cn, L, stride](detail::Node& nd) {
        if (pc->requires_grad) pc->ensure_grad();
        if (pf->requires_grad) pf->ensure_grad();
        for (int i = 0; i < m; ++i) {
          const double* g = nd.grad.data() + static_cast<size_t>(i) * n;
          const double* crow = pc->value.data() + static_cast<size_t>(i) * cn;
          for (int j = 0; j < cn; ++j) {
            for (int t = 0; t < L; ++t) {
              const int idx = (stride * j + t) % n;
              if (pc->requires_grad)
                pc->grad[static_cast<size_t>(i) * cn + j] += g[idx] * pf->value[static_cast<size_t>(t)];
              if (pf->requires_grad) pf->grad[static_cast<size_t>(t)] += g[idx] * crow[j];
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Dropout and gradient gating
// ---------------------------------------------------------------------------

// Inverted dropout. Eval mode is the identity (same tensor handle).
inline Tensor dropout(const Tensor& x, double p, RngStream& rng, bool train) {
  check_arg(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  if (!train || p == 0.0) return x;
  const double keep = 1.0 - p;
  std::vector<double> mask(x.size());
  for (double& mv : mask) mv = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
  std::vector<double> out(x.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * mask[i];
  auto px = x.node();
  return detail::make_op("dropout", x.shape(), std::move(out), {x},
                         [px, mask](detail::Node& nd) {
                           px->ensure_grad();
                           for (size_t i = 0; i < nd.grad.size(); ++i)
                             px->grad[i] += nd.grad[i] * mask[i];
                         });
}

// Forward identity; backward multiplies the incoming gradient by `mask`.
// Positions with mask 0 keep their forward value but are cut from the tape.
inline Tensor grad_gate(const Tensor& x, const std::vector<double>& mask) {
  check_arg(mask.size() == x.size(), "grad_gate: mask size mismatch");
  std::vector<double> out = x.value();
  auto px = x.node();
  return detail::make_op("grad_gate", x.shape(), std::move(out), {x},
                         [px, mask](detail::Node& nd) {
                           px->ensure_grad();
                           for (size_t i = 0; i < nd.grad.size(); ++i)
                             px->grad[i] += nd.grad[i] * mask[i];
                         });
}

// Extension hook: single-input op with caller-provided forward value and
// backward rule d(out)/d(in) applied entrywise via the provided closure.
inline Tensor custom_unary(const Tensor& x, std::vector<double> value, Shape shape,
                           std::function<void(const std::vector<double>& out_grad,
                                              std::vector<double>& in_grad)> bwd,
                           const char* name = "custom") {
  auto px = x.node();
  return detail::make_op(name, std::move(shape), std::move(value), {x},
                         [px, bwd](detail::Node& nd) {
                           px->ensure_grad();
                           bwd(nd.grad, px->grad);
                         });
}

// ---------------------------------------------------------------------------
// Discrete Fourier transform along one axis (real/imaginary parts)
// ---------------------------------------------------------------------------

namespace detail {

// Unnormalized DFT of complex input (re, im) along `axis` of a rank-2 tensor.
// Component selects real (0) or imaginary (1) part of the result.
inline Tensor dft_component(const Tensor& re, const Tensor& im, int axis,
                            int component) {
  check_arg(re.ndim() == 2, "dft: expects rank-2, got " + shape_str(re.shape()));
  check_arg(axis == 0 || axis == 1, "dft: axis must be 0 or 1");
  const bool has_im = im.defined();
  if (has_im) check_same_shape(re, im, "dft");
  const int m = re.dim(0), n = re.dim(1);
  const int N = axis == 0 ? m : n;     // transform length
  const int M = axis == 0 ? n : m;     // number of independent lines
  // Tabulated cos/sin of 2*pi*k*j/N.
  std::vector<double> cs(static_cast<size_t>(N) * N), sn(static_cast<size_t>(N) * N);
  for (int k = 0; k < N; ++k)
    for (int j = 0; j < N; ++j) {
      double ang = 2.0 * 3.141592653589793238462643383279502884 *
                   static_cast<double>(static_cast<long long>(k) * j % N) / N;
      cs[static_cast<size_t>(k) * N + j] = std::cos(ang);
      sn[static_cast<size_t>(k) * N + j] = std::sin(ang);
    }
  auto idx = [axis, n](int line, int pos) -> size_t {
    return axis == 0 ? static_cast<size_t>(pos) * n + line
                     : static_cast<size_t>(line) * n + pos;
  };
  std::vector<double> out(re.size(), 0.0);
  for (int l = 0; l < M; ++l)
    for (int k = 0; k < N; ++k) {
      double acc = 0.0;
      for (int j = 0; j < N; ++j) {
        const double c = cs[static_cast<size_t>(k) * N + j];
        const double s = sn[static_cast<size_t>(k) * N + j];
        const double a = re.value()[idx(l, j)];
        const double b = has_im ? im.value()[idx(l, j)] : 0.0;
        // X = sum (a + ib)(cos - i sin); Re = a c + b s, Im = b c - a s
        acc += component == 0 ? a * c + b * s : b * c - a * s;
      }
      out[idx(l, k)] = acc;
    }
  std::vector<Tensor> inputs = {re};
  if (has_im) inputs.push_back(im);
  auto pre = re.node();
  auto pim = has_im ? im.node() : nullptr;
  return make_op(
      component == 0 ? "dft_re" : "dft_im", re.shape(), std::move(out), inputs,
      [pre, pim, cs, sn, idx, M, N, component](Node& nd) {
        // Linear op; adjoint uses the transposed (symmetric) cos/sin tables.
        for (int l = 0; l < M; ++l)
          for (int j = 0; j < N; ++j) {
            double acc_re = 0.0, acc_im = 0.0;
            for (int k = 0; k < N; ++k) {
              const double g = nd.grad[idx(l, k)];
              const double c = cs[static_cast<size_t>(k) * N + j];
              const double s = sn[static_cast<size_t>(k) * N + j];
              if (component == 0) {
                acc_re += g * c;
                acc_im += g * s;
              } else {
                acc_re -= g * s;
                acc_im += g * c;
              }
            }
            if (pre->requires_grad) {
              pre->ensure_grad();
              pre->grad[idx(l, j)] += acc_re;
            }
            if (pim && pim->requires_grad) {
              pim->ensure_grad();
              pim->grad[idx(l, j)] += acc_im;
            }
          }
      });
}

}  // namespace detail

// Real part of the DFT along `axis`. Pass an undefined Tensor for a purely
// real input.
inline Tensor dft_re(const Tensor& re, const Tensor& im, int axis) {
  return detail::dft_component(re, im, axis, 0);
}
inline Tensor dft_im(const Tensor& re, const Tensor& im, int axis) {
  return detail::dft_component(re, im, axis, 1);
}
inline Tensor dft_re(const Tensor& re, int axis) { return dft_re(re, Tensor(), axis); }
inline Tensor dft_im(const Tensor& re, int axis) { return dft_im(re, Tensor(), axis); }

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

// Cross-entropy of a single logit row against an integer label.
inline Tensor cross_entropy_logits(const Tensor& logits, int label) {
  check_arg(logits.ndim() == 1 || (logits.ndim() == 2 && logits.dim(0) == 1),
            "cross_entropy: expects a single logit row, got " +
                shape_str(logits.shape()));
  const int C = static_cast<int>(logits.size());
  check_arg(0 <= label && label < C, "cross_entropy: label out of range");
  const double* l = logits.value().data();
  double mx = l[0];
  for (int j = 1; j < C; ++j) mx = std::max(mx, l[j]);
  double sum = 0.0;
  for (int j = 0; j < C; ++j) sum += std::exp(l[j] - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> probs(static_cast<size_t>(C));
  for (int j = 0; j < C; ++j) probs[static_cast<size_t>(j)] = std::exp(l[j] - lse);
  auto pl = logits.node();
  return detail::make_op("cross_entropy", {1}, {lse - l[label]}, {logits},
                         [pl, probs, label, C](detail::Node& nd) {
                           pl->ensure_grad();
                           for (int j = 0; j < C; ++j)
                             pl->grad[static_cast<size_t>(j)] +=
                                 nd.grad[0] * (probs[static_cast<size_t>(j)] -
                                               (j == label ? 1.0 : 0.0));
                         });
}

// ---------------------------------------------------------------------------
// Convenience operators and parameter helpers
// ---------------------------------------------------------------------------

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul(x, w), b);
}

inline void zero_grads(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) {
    Tensor t = p;
    t.zero_grad();
  }
}

// ---------------------------------------------------------------------------
// Gradient checking
// ---------------------------------------------------------------------------

// Compares reverse-mode gradients of f() against central finite differences
// over every entry of every parameter. Returns the max relative error
// |analytic - numeric| / max(1, |analytic|, |numeric|).
inline double grad_check(const std::function<Tensor()>& f,
                         const std::vector<Tensor>& params, double eps = 1e-5) {
  check_arg(eps > 0.0 && eps <= 1e-2, "grad_check: eps must be in (0, 1e-2]");
  zero_grads(params);
  Tensor loss = f();
  check_arg(loss.size() == 1, "grad_check: f must return a scalar");
  if (!loss.all_finite()) throw NumericError("grad_check: non-finite loss");
  loss.backward();
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const Tensor& p : params) {
    analytic.push_back(p.has_grad() ? p.grad()
                                    : std::vector<double>(p.size(), 0.0));
  }
  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    for (size_t i = 0; i < p.size(); ++i) {
      const double orig = p.value()[i];
      p.value()[i] = orig + eps;
      const double lp = f().item();
      p.value()[i] = orig - eps;
      const double lm = f().item();
      p.value()[i] = orig;
      if (!std::isfinite(lp) || !std::isfinite(lm))
        throw NumericError("grad_check: non-finite perturbed loss");
      const double numeric = (lp - lm) / (2.0 * eps);
      const double a = analytic[pi][i];
      const double rel =
          std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
      max_rel = std::max(max_rel, rel);
    }
  }
  if (!std::isfinite(max_rel)) throw NumericError("grad_check: non-finite result");
  return max_rel;
}

// Walks the tape below `root` and names the deepest op whose output went
// non-finite while its inputs were still finite.
inline std::string first_nonfinite_op(const Tensor& root) {
  std::vector<std::shared_ptr<detail::Node>> stack = {root.node()};
  std::unordered_set<detail::Node*> seen;
  std::string found = "";
  while (!stack.empty()) {
    auto n = stack.back();
    stack.pop_back();
    if (!seen.insert(n.get()).second) continue;
    bool bad = false;
    for (double v : n->value)
      if (!std::isfinite(v)) {
        bad = true;
        break;
      }
    if (bad) {
      bool parent_bad = false;
      for (auto& p : n->parents) {
        for (double v : p->value)
          if (!std::isfinite(v)) {
            parent_bad = true;
            break;
          }
        if (parent_bad) break;
      }
      if (!parent_bad) found = n->op;
    }
    for (auto& p : n->parents) stack.push_back(p);
  }
  return found;
}

}  // namespace wavesp
