// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <unordered_set>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "notecraft/errors.hpp"

namespace notecraft {

namespace {

thread_local bool tls_grad_enabled = true;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& s) { return fmt::format("[{}]", fmt::join(s, "x")); }

// Creates the output node; wires parents and the backward closure only when
// recording is on and some input needs a gradient.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::vector<NodePtr> parents, std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  bool needs = false;
  if (tls_grad_enabled) {
    for (const auto& p : parents) needs = needs || p->requires_grad;
  }
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (!t.defined()) throw ContractError(fmt::format("{}: undefined tensor", op));
  if (t.rank() != rank) {
    throw DimensionError(fmt::format("{}: expected rank {}, got shape {}", op, rank,
                                     shape_str(t.shape())));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(fmt::format("{}: shape mismatch {} vs {}", op,
                                     shape_str(a.shape()), shape_str(b.shape())));
  }
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (product(shape) != values.size()) {
    throw DimensionError(fmt::format("tensor: shape {} holds {} values, got {}",
                                     shape_str(shape), product(shape), values.size()));
  }
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = product(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(Shape{}, {value}, requires_grad);
}

const Shape& Tensor::shape() const {
  if (!node_) throw ContractError("tensor: undefined");
  return node_->shape;
}

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw DimensionError("tensor: axis out of range");
  return s[axis];
}

std::size_t Tensor::numel() const { return node_ ? node_->values.size() : 0; }

std::span<const double> Tensor::values() const {
  if (!node_) throw ContractError("tensor: undefined");
  return node_->values;
}

std::span<double> Tensor::mutable_values() {
  if (!node_) throw ContractError("tensor: undefined");
  return node_->values;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError(fmt::format("item: tensor has {} elements", numel()));
  }
  return node_->values[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  return node_->values[row * node_->shape[1] + col];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!node_) throw ContractError("tensor: undefined");
  if (!node_->is_leaf()) throw ContractError("set_requires_grad: only leaves can be toggled");
  node_->requires_grad = flag;
  if (!flag) node_->grad.clear();
}

bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("grad: tensor has no gradient");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  if (!node_) throw ContractError("tensor: undefined");
  return node_->ensure_grad();
}

void Tensor::zero_grad() {
  if (node_ && !node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->values, false); }

Tensor Tensor::clone() const { return Tensor(shape(), node_->values, node_->requires_grad); }

void Tensor::backward() const {
  if (!node_) throw ContractError("backward: undefined root");
  if (node_->values.size() != 1) {
    throw ContractError(fmt::format("backward: root must be scalar, got shape {}",
                                    shape_str(node_->shape)));
  }
  if (!node_->requires_grad) {
    throw ContractError("backward: root was not produced by recorded operations");
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior gradients are scratch space for this pass; leaves accumulate.
  for (Node* n : order) {
    if (!n->is_leaf()) n->grad.assign(n->values.size(), 0.0);
  }
  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if (!(*it)->is_leaf()) (*it)->backward(**it);
  }
}

NoGradGuard::NoGradGuard() : previous_(tls_grad_enabled) { tls_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { tls_grad_enabled = previous_; }

bool grad_enabled() { return tls_grad_enabled; }

// ---- operations -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError(fmt::format("matmul: inner dimensions disagree {} x {}",
                                     shape_str(a.shape()), shape_str(b.shape())));
  }
  std::vector<double> out(m * n, 0.0);
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return make_result({m, n}, std::move(out), {a.node(), b.node()}, [m, k, n](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    const double* g = self.grad.data();
    if (na.requires_grad) {
      auto& ga = na.ensure_grad();
      // dA = G · Bᵀ
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = nb.values.data() + p * n;
          const double* grow = g + i * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (nb.requires_grad) {
      auto& gb = nb.ensure_grad();
      // dB = Aᵀ · G
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = na.values[i * k + p];
          if (aip == 0.0) continue;
          double* gbrow = gb.data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += aip * grow[j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  const auto v = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
  return make_result({n, m}, std::move(out), {a.node()}, [m, n](Node& self) {
    auto& ga = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[j * m + i];
  });
}

namespace {

template <typename Fwd, typename DA, typename DB>
Tensor binary_elementwise(const Tensor& a, const Tensor& b, const char* op, Fwd fwd,
                          DA da, DB db) {
  require_same_shape(a, b, op);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(av[i], bv[i]);
  return make_result(a.shape(), std::move(out), {a.node(), b.node()}, [da, db](Node& self) {
    Node& na = *self.parents[0];
    Node& nb = *self.parents[1];
    if (na.requires_grad) {
      auto& g = na.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[i] * da(na.values[i], nb.values[i]);
    }
    if (nb.requires_grad) {
      auto& g = nb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i)
        g[i] += self.grad[i] * db(na.values[i], nb.values[i]);
    }
  });
}

// f(x) with derivative expressed through (x, y=f(x)).
template <typename Fwd, typename Deriv>
Tensor unary_elementwise(const Tensor& x, Fwd fwd, Deriv deriv) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(xv[i]);
  return make_result(x.shape(), std::move(out), {x.node()}, [deriv](Node& self) {
    Node& nx = *self.parents[0];
    auto& g = nx.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i)
      g[i] += self.grad[i] * deriv(nx.values[i], self.values[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary_elementwise(
      a, [factor](double x) { return x * factor; },
      [factor](double, double) { return factor; });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor add_row(const Tensor& x, const Tensor& bias) {
  require_rank(x, 2, "add_row");
  require_rank(bias, 1, "add_row");
  const std::size_t m = x.dim(0), n = x.dim(1);
  if (bias.dim(0) != n) {
    throw DimensionError(fmt::format("add_row: bias {} does not match {}",
                                     shape_str(bias.shape()), shape_str(x.shape())));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  const auto bv = bias.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bv[j];
  return make_result({m, n}, std::move(out), {x.node(), bias.node()}, [m, n](Node& self) {
    Node& nx = *self.parents[0];
    Node& nb = *self.parents[1];
    if (nx.requires_grad) {
      auto& g = nx.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (nb.requires_grad) {
      auto& g = nb.ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

Tensor mul_constant(const Tensor& x, std::span<const double> factors) {
  if (factors.size() != x.numel()) {
    throw DimensionError(fmt::format("mul_constant: {} factors for {} elements",
                                     factors.size(), x.numel()));
  }
  std::vector<double> f(factors.begin(), factors.end());
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= f[i];
  return make_result(x.shape(), std::move(out), {x.node()},
                     [f = std::move(f)](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * f[i];
                     });
}

Tensor tanh(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp(const Tensor& x) {
  return unary_elementwise(
      x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor log_sigmoid(const Tensor& x) {
  // log σ(x) = -softplus(-x), evaluated without overflow on either side.
  return unary_elementwise(
      x,
      [](double v) { return v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v)); },
      [](double v, double) {
        // d/dx log σ(x) = σ(-x)
        return v >= 0 ? std::exp(-v) / (1.0 + std::exp(-v)) : 1.0 / (1.0 + std::exp(v));
      });
}

Tensor log_softmax(const Tensor& x, int axis) {
  if (!x.defined()) throw ContractError("log_softmax: undefined tensor");
  const int rank = static_cast<int>(x.rank());
  if (rank != 1 && rank != 2) {
    throw DimensionError("log_softmax: only rank 1 and 2 are supported");
  }
  const int resolved = axis < 0 ? axis + rank : axis;
  if (resolved < 0 || resolved >= rank) throw DimensionError("log_softmax: bad axis");
  if (rank == 2 && resolved == 0) return transpose(log_softmax(transpose(x), 1));

  const std::size_t cols = x.shape().back();
  const std::size_t rows = x.numel() / std::max<std::size_t>(cols, 1);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = xv.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double total = 0.0;
    for (std::size_t j = 0; j < cols; ++j) total += std::exp(in[j] - mx);
    const double lse = mx + std::log(total);
    for (std::size_t j = 0; j < cols; ++j) o[j] = in[j] - lse;
  }
  return make_result(x.shape(), std::move(out), {x.node()}, [rows, cols](Node& self) {
    // dx_j = g_j - softmax_j · Σ_i g_i
    auto& gx = self.parents[0]->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* g = self.grad.data() + r * cols;
      const double* y = self.values.data() + r * cols;
      double gsum = 0.0;
      for (std::size_t j = 0; j < cols; ++j) gsum += g[j];
      for (std::size_t j = 0; j < cols; ++j) gx[r * cols + j] += g[j] - std::exp(y[j]) * gsum;
    }
  });
}

Tensor sum(const Tensor& x) {
  const auto xv = x.values();
  double total = 0.0;
  for (double v : xv) total += v;
  return make_result({}, {total}, {x.node()}, [](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (double& gi : g) gi += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ContractError("mean: empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor weighted_sum(const Tensor& x, std::span<const double> weights) {
  if (weights.size() != x.numel()) {
    throw DimensionError(fmt::format("weighted_sum: {} weights for {} elements",
                                     weights.size(), x.numel()));
  }
  std::vector<double> w(weights.begin(), weights.end());
  const auto xv = x.values();
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) total += w[i] * xv[i];
  return make_result({}, {total}, {x.node()}, [w = std::move(w)](Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * w[i];
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids) {
  return gather_windows(table, ids, 1);
}

Tensor gather_windows(const Tensor& table, std::span<const std::int32_t> ids,
                      std::size_t width) {
  require_rank(table, 2, "gather_windows");
  if (width == 0 || ids.size() % width != 0) {
    throw DimensionError("gather_windows: id count is not a multiple of the window width");
  }
  const std::size_t vocab = table.dim(0), n = table.dim(1);
  const std::size_t rows = ids.size() / width;
  std::vector<std::int32_t> idx(ids.begin(), ids.end());
  for (auto id : idx) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw InputError(fmt::format("gather: id {} outside table of {} rows", id, vocab));
    }
  }
  const auto tv = table.values();
  std::vector<double> out(rows * width * n);
  for (std::size_t s = 0; s < idx.size(); ++s) {
    std::copy_n(tv.data() + static_cast<std::size_t>(idx[s]) * n, n, out.data() + s * n);
  }
  return make_result({rows, width * n}, std::move(out), {table.node()},
                     [idx = std::move(idx), n](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t s = 0; s < idx.size(); ++s) {
                         double* dst = g.data() + static_cast<std::size_t>(idx[s]) * n;
                         const double* src = self.grad.data() + s * n;
                         for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
                       }
                     });
}

Tensor pick(const Tensor& x, std::span<const std::int32_t> index) {
  require_rank(x, 2, "pick");
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  if (index.size() != rows) {
    throw DimensionError(fmt::format("pick: {} indices for {} rows", index.size(), rows));
  }
  std::vector<std::int32_t> idx(index.begin(), index.end());
  std::vector<double> out(rows);
  const auto xv = x.values();
  for (std::size_t r = 0; r < rows; ++r) {
    if (idx[r] < 0 || static_cast<std::size_t>(idx[r]) >= cols) {
      throw InputError(fmt::format("pick: index {} outside {} columns", idx[r], cols));
    }
    out[r] = xv[r * cols + static_cast<std::size_t>(idx[r])];
  }
  return make_result({rows}, std::move(out), {x.node()},
                     [idx = std::move(idx), cols](Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       for (std::size_t r = 0; r < idx.size(); ++r)
                         g[r * cols + static_cast<std::size_t>(idx[r])] += self.grad[r];
                     });
}

Tensor concat(const std::vector<Tensor>& parts) {
  std::vector<NodePtr> parents;
  std::vector<double> out;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) {
    if (p.rank() > 1) throw DimensionError("concat: only scalars and vectors");
    parents.push_back(p.node());
    sizes.push_back(p.numel());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  const std::size_t total = out.size();
  return make_result({total}, std::move(out), std::move(parents),
                     [sizes = std::move(sizes)](Node& self) {
                       std::size_t off = 0;
                       for (std::size_t i = 0; i < sizes.size(); ++i) {
                         Node& p = *self.parents[i];
                         if (p.requires_grad) {
                           auto& g = p.ensure_grad();
                           for (std::size_t j = 0; j < sizes[i]; ++j) g[j] += self.grad[off + j];
                         }
                         off += sizes[i];
                       }
                     });
}

}  // namespace notecraft
