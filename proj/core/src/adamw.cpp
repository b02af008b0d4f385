// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/adamw.hpp"

#include <cmath>

#include <fmt/format.h>

#include "notecraft/errors.hpp"

namespace notecraft {

StepOutcome adamw_step(std::span<Tensor> params, AdamWState& state, double lr) {
  if (!(lr >= 0.0)) throw ContractError(fmt::format("adamw: learning rate {} < 0", lr));
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.numel(), 0.0);
      state.second_moment.emplace_back(p.numel(), 0.0);
    }
  }
  if (state.first_moment.size() != params.size()) {
    throw DimensionError("adamw: parameter list changed since the first step");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.first_moment[i].size() != params[i].numel()) {
      throw DimensionError(fmt::format("adamw: parameter {} changed size", i));
    }
    if (!params[i].has_grad()) continue;
    for (double g : params[i].grad()) {
      if (!std::isfinite(g)) {
        return {false, fmt::format("non-finite gradient in parameter {} at step {}", i,
                                   state.step_count + 1)};
      }
    }
  }

  const auto t = static_cast<double>(++state.step_count);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  const double decay = 1.0 - lr * state.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto values = params[i].mutable_values();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    const bool has = params[i].has_grad();
    const auto grad = has ? params[i].grad() : std::span<const double>{};
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = has ? grad[j] : 0.0;
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g;
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g * g;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      values[j] = values[j] * decay - lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
  return {};
}

AdamW::AdamW(std::vector<Tensor> params, AdamWState hyper)
    : params_(std::move(params)), state_(std::move(hyper)) {}

StepOutcome AdamW::step(double lr) {
  auto outcome = adamw_step(params_, state_, lr);
  if (!outcome.applied) skipped_.push_back(outcome.diagnostic);
  return outcome;
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace notecraft
