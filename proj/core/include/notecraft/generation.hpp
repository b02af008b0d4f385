// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "notecraft/policy.hpp"
#include "notecraft/vocab.hpp"

namespace notecraft {

struct DecodeConfig {
  double temperature = 1.0;        // > 0
  std::size_t top_k = 50;          // 0 disables the filter
  double top_p = 1.0;              // (0, 1]
  double repetition_penalty = 1.2; // >= 1
  std::size_t max_new_tokens = 64;
  std::uint64_t seed = 0;
  bool sample = true;              // false: greedy argmax

  void validate() const;
  bool operator==(const DecodeConfig&) const = default;
};

// For every seen token: positive logits are divided by `penalty`, negative
// ones multiplied by it.
std::vector<double> apply_repetition_penalty(std::span<const double> logits,
                                             std::span<const TokenId> seen, double penalty);

// Keeps the k largest logits (ties: lower id wins); others become -inf.
std::vector<double> filter_top_k(std::span<const double> logits, std::size_t k);

// Keeps the smallest probability-sorted prefix whose mass reaches p.
std::vector<double> filter_top_p(std::span<const double> logits, double p);

// The full per-step pipeline: penalty -> temperature -> top-k -> top-p ->
// renormalize. Returns next-token probabilities (zero for filtered tokens).
std::vector<double> next_token_distribution(std::span<const double> logits,
                                            std::span<const TokenId> seen,
                                            const DecodeConfig& cfg);

// Highest value, lowest id on ties.
TokenId argmax_token(std::span<const double> values);

// Autoregressive decode from `prompt`. Stops after EOS (included) or
// max_new_tokens. The output depends only on (policy, prompt, cfg).
TokenSeq decode(const Policy& policy, std::span<const TokenId> prompt, const DecodeConfig& cfg);

}  // namespace notecraft
