// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "notecraft/tensor.hpp"

namespace notecraft {

// Moments are zero-initialized and sized on the first step.
struct AdamWState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step_count = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct StepOutcome {
  bool applied = true;
  std::string diagnostic;  // set when the step was skipped
};

// Decoupled-weight-decay Adam with bias correction:
//   p ← p·(1 − lr·wd) − lr · m̂ / (√v̂ + eps)
// A parameter without an accumulated gradient contributes a zero gradient.
// Any non-finite gradient entry skips the whole step and leaves `state`
// untouched.
StepOutcome adamw_step(std::span<Tensor> params, AdamWState& state, double lr);

class AdamW {
 public:
  explicit AdamW(std::vector<Tensor> params, AdamWState hyper = {});

  StepOutcome step(double lr);
  void zero_grad();

  const AdamWState& state() const { return state_; }
  const std::vector<Tensor>& params() const { return params_; }
  // One line per skipped step.
  const std::vector<std::string>& skipped() const { return skipped_; }

 private:
  std::vector<Tensor> params_;
  AdamWState state_;
  std::vector<std::string> skipped_;
};

}  // namespace notecraft
