// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace notecraft {

using Shape = std::vector<std::size_t>;

namespace detail {

// One vertex of the recorded computation. Leaves have no backward function.
struct Node {
  Shape shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until a gradient is accumulated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return !backward; }
  std::vector<double>& ensure_grad() {
    if (grad.empty()) grad.assign(values.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

// Dense row-major float64 array with an optional gradient accumulator.
//
// Tensor is a handle: copies share the same storage and graph vertex. Use
// clone() for an independent deep copy. Operations on tensors that require
// gradients record a backward closure; backward() on a scalar root walks the
// recorded graph in reverse topological order and accumulates (+=) into every
// reachable leaf that requires gradients.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double at(std::size_t i) const { return values()[i]; }
  double at(std::size_t row, std::size_t col) const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  // New leaf sharing nothing with this tensor; never requires grad.
  Tensor detach() const;
  // Deep copy that keeps the requires_grad flag but drops grad and history.
  Tensor clone() const;

  void backward() const;

  bool same_storage(const Tensor& other) const { return node_ == other.node_; }

  // Internal: used by the op implementations.
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

// Disables graph recording on the current thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

bool grad_enabled();

// ---- differentiable operations -------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor neg(const Tensor& a);
// x[m×n] + bias[n] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);
// Elementwise product with a constant (non-differentiable) multiplier.
Tensor mul_constant(const Tensor& x, std::span<const double> factors);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log_sigmoid(const Tensor& x);
// Numerically stable log-softmax. Rank 1 or 2; axis -1 means the last axis.
Tensor log_softmax(const Tensor& x, int axis = -1);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// sum_i weights[i] * x[i] with constant weights.
Tensor weighted_sum(const Tensor& x, std::span<const double> weights);
// rows[t] = table[ids[t]]  ->  [T×n]
Tensor gather_rows(const Tensor& table, std::span<const std::int32_t> ids);
// out[t] = concat_j table[ids[t*width + j]]  ->  [T×(width·n)]
Tensor gather_windows(const Tensor& table, std::span<const std::int32_t> ids,
                      std::size_t width);
// out[t] = x[t, index[t]]  ->  [T]
Tensor pick(const Tensor& x, std::span<const std::int32_t> index);
Tensor concat(const std::vector<Tensor>& parts);

}  // namespace notecraft
