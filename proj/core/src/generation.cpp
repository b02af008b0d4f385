// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/generation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "notecraft/errors.hpp"
#include "notecraft/rng.hpp"

namespace notecraft {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Token ids sorted by descending value, ascending id on ties.
std::vector<std::size_t> ranked(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] > values[b]; });
  return order;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = logits[i] == kNegInf ? 0.0 : std::exp(logits[i] - mx);
    total += p[i];
  }
  for (auto& x : p) x /= total;
  return p;
}

}  // namespace

void DecodeConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("decode: temperature must be > 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw ConfigError("decode: top_p must lie in (0, 1]");
  if (!(repetition_penalty >= 1.0)) throw ConfigError("decode: repetition_penalty must be >= 1");
}

std::vector<double> apply_repetition_penalty(std::span<const double> logits,
                                             std::span<const TokenId> seen, double penalty) {
  if (!(penalty >= 1.0)) throw ConfigError("repetition penalty must be >= 1");
  std::vector<double> out(logits.begin(), logits.end());
  std::vector<bool> mark(out.size(), false);
  for (TokenId t : seen) {
    if (t >= 0 && static_cast<std::size_t>(t) < out.size()) mark[static_cast<std::size_t>(t)] = true;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!mark[i]) continue;
    out[i] = out[i] > 0 ? out[i] / penalty : out[i] * penalty;
  }
  return out;
}

std::vector<double> filter_top_k(std::span<const double> logits, std::size_t k) {
  std::vector<double> out(logits.begin(), logits.end());
  if (k == 0 || k >= out.size()) return out;
  const auto order = ranked(logits);
  for (std::size_t r = k; r < order.size(); ++r) out[order[r]] = kNegInf;
  return out;
}

std::vector<double> filter_top_p(std::span<const double> logits, double p) {
  std::vector<double> out(logits.begin(), logits.end());
  if (p >= 1.0) return out;
  const auto probs = softmax(logits);
  const auto order = ranked(probs);
  double mass = 0.0;
  std::size_t keep = 0;
  while (keep < order.size()) {
    mass += probs[order[keep]];
    ++keep;
    if (mass >= p) break;
  }
  for (std::size_t r = keep; r < order.size(); ++r) out[order[r]] = kNegInf;
  return out;
}

std::vector<double> next_token_distribution(std::span<const double> logits,
                                            std::span<const TokenId> seen,
                                            const DecodeConfig& cfg) {
  auto z = apply_repetition_penalty(logits, seen, cfg.repetition_penalty);
  for (auto& v : z) v /= cfg.temperature;
  z = filter_top_k(z, cfg.top_k);
  z = filter_top_p(z, cfg.top_p);
  return softmax(z);
}

TokenId argmax_token(std::span<const double> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return static_cast<TokenId>(best);
}

TokenSeq decode(const Policy& policy, std::span<const TokenId> prompt, const DecodeConfig& cfg) {
  cfg.validate();
  TokenSeq context(prompt.begin(), prompt.end());
  Rng rng(derive_seed(cfg.seed, {0xdec0de}));
  TokenSeq out;
  for (std::size_t step = 0; step < cfg.max_new_tokens; ++step) {
    const auto logits = next_token_logits(policy, context);
    TokenId next;
    if (!cfg.sample) {
      next = argmax_token(apply_repetition_penalty(logits, context, cfg.repetition_penalty));
    } else {
      const auto probs = next_token_distribution(logits, context, cfg);
      const double u = rng.uniform();
      double cumulative = 0.0;
      next = -1;
      TokenId last = 0;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        last = static_cast<TokenId>(i);
        cumulative += probs[i];
        if (u < cumulative) {
          next = last;
          break;
        }
      }
      if (next < 0) next = last;  // rounding left u above the final cumulative sum
    }
    out.push_back(next);
    context.push_back(next);
    if (next == Vocab::kEos) break;
  }
  return out;
}

}  // namespace notecraft
