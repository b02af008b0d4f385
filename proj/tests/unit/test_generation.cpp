// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <numeric>

#include "notecraft/errors.hpp"
#include "notecraft/generation.hpp"
#include "support/testing.hpp"

using namespace notecraft;

TEST_CASE("repetition penalty divides positive and multiplies negative logits") {
  const std::vector<double> logits{2.0, -1.0, 0.5, 3.0};
  const auto out = apply_repetition_penalty(logits, TokenSeq{0, 1, 1}, 2.0);
  CHECK(out == std::vector<double>{1.0, -2.0, 0.5, 3.0});
}

TEST_CASE("top-k keeps the k largest with the lower id on ties") {
  const std::vector<double> logits{1.0, 3.0, 3.0, 2.0};
  const auto out = filter_top_k(logits, 2);
  CHECK(out[1] == 3.0);
  CHECK(out[2] == 3.0);
  CHECK(std::isinf(out[0]));
  CHECK(std::isinf(out[3]));
  const auto tie = filter_top_k(logits, 1);
  CHECK(tie[1] == 3.0);
  CHECK(std::isinf(tie[2]));
}

TEST_CASE("top-p keeps the smallest prefix reaching p") {
  // Probabilities 0.5, 0.3, 0.2.
  const std::vector<double> logits{std::log(0.5), std::log(0.3), std::log(0.2)};
  const auto a = filter_top_p(logits, 0.75);
  CHECK(std::isfinite(a[0]));
  CHECK(std::isfinite(a[1]));
  CHECK(std::isinf(a[2]));
  const auto b = filter_top_p(logits, 0.5);
  CHECK(std::isinf(b[1]));
}

TEST_CASE("pipeline order: penalty, temperature, top-k, top-p") {
  const std::vector<double> logits{2.0, 1.0, -1.0, 0.0};
  DecodeConfig cfg;
  cfg.repetition_penalty = 2.0;
  cfg.temperature = 0.5;
  cfg.top_k = 3;
  cfg.top_p = 1.0;
  const auto p = next_token_distribution(logits, TokenSeq{0}, cfg);
  // Penalized: {1, 1, -1, 0}; /T: {2, 2, -2, 0}; top-3 drops id 2.
  const double z = 2 * std::exp(2.0) + 1.0;
  CHECK(p[0] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-14));
  CHECK(p[1] == doctest::Approx(std::exp(2.0) / z).epsilon(1e-14));
  CHECK(p[2] == 0.0);
  CHECK(p[3] == doctest::Approx(1.0 / z).epsilon(1e-14));
}

TEST_CASE("distributions are normalized (property)") {
  Rng rng(1);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<double> logits(2 + rng.below(20));
    for (auto& v : logits) v = rng.uniform(-6, 6);
    DecodeConfig cfg;
    cfg.temperature = rng.uniform(0.1, 2.0);
    cfg.top_k = rng.below(logits.size() + 1);
    cfg.top_p = rng.uniform(0.05, 1.0);
    cfg.repetition_penalty = rng.uniform(1.0, 2.0);
    const auto seen = testing::random_tokens(rng, rng.below(5), 0, static_cast<TokenId>(logits.size()));
    const auto p = next_token_distribution(logits, seen, cfg);
    REQUIRE(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
    REQUIRE(std::count_if(p.begin(), p.end(), [](double x) { return x > 0; }) >= 1);
  }
}

TEST_CASE("sampled first tokens follow the filtered distribution (chi-square)") {
  Policy p = testing::random_tabular(8, 5, 2.0);
  DecodeConfig cfg;
  cfg.max_new_tokens = 1;
  cfg.top_k = 6;
  cfg.temperature = 0.8;
  const TokenSeq prompt{Vocab::kBos, 6};
  const auto probs = next_token_distribution(next_token_logits(p, prompt), prompt, cfg);
  std::vector<double> counts(8, 0.0);
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    cfg.seed = static_cast<std::uint64_t>(i);
    counts[static_cast<std::size_t>(decode(p, prompt, cfg).at(0))] += 1.0;
  }
  double chi2 = 0.0;
  int cells = 0;
  for (std::size_t j = 0; j < 8; ++j) {
    if (probs[j] == 0.0) {
      REQUIRE(counts[j] == 0.0);
      continue;
    }
    chi2 += std::pow(counts[j] - n * probs[j], 2) / (n * probs[j]);
    ++cells;
  }
  CHECK(cells == 6);
  CHECK(chi2 < 20.52);  // 5 dof, p = 0.001
}

TEST_CASE("decode is a pure function of policy, prompt and config") {
  Policy p = testing::small_tiny_lm(2);
  DecodeConfig cfg;
  cfg.max_new_tokens = 12;
  cfg.seed = 3;
  const TokenSeq prompt{1, 6, 7, 3};
  CHECK(decode(p, prompt, cfg) == decode(p, prompt, cfg));
  cfg.seed = 4;
  bool differs = false;
  for (std::uint64_t s = 4; s < 20 && !differs; ++s) {
    DecodeConfig other = cfg;
    other.seed = s;
    DecodeConfig first = cfg;
    first.seed = 3;
    differs = decode(p, prompt, other) != decode(p, prompt, first);
  }
  CHECK(differs);
}

TEST_CASE("decode stops at EOS or the token budget") {
  // A table whose every row prefers EOS overwhelmingly.
  std::vector<double> t(6 * 6, -50.0);
  for (std::size_t r = 0; r < 6; ++r) t[r * 6 + Vocab::kEos] = 50.0;
  Policy eos = make_tabular(TabularPolicy(Tensor({6, 6}, t)));
  DecodeConfig cfg;
  cfg.max_new_tokens = 5;
  CHECK(decode(eos, TokenSeq{1}, cfg) == TokenSeq{Vocab::kEos});

  std::vector<double> u(6 * 6, 0.0);
  for (std::size_t r = 0; r < 6; ++r) u[r * 6 + Vocab::kEos] = -1e9;
  Policy never = make_tabular(TabularPolicy(Tensor({6, 6}, u)));
  CHECK(decode(never, TokenSeq{1}, cfg).size() == 5);
}

TEST_CASE("greedy decoding takes the penalized argmax") {
  std::vector<double> t(6 * 6, 0.0);
  for (std::size_t r = 0; r < 6; ++r) {
    t[r * 6 + 5] = 1.0;
    t[r * 6 + 4] = 0.9;
  }
  Policy p = make_tabular(TabularPolicy(Tensor({6, 6}, t)));
  DecodeConfig cfg;
  cfg.sample = false;
  cfg.max_new_tokens = 3;
  cfg.repetition_penalty = 1.5;
  // Step 1 picks 5; then 5 is penalized to 0.667 < 0.9, so 4; then both seen: 0.667 vs 0.6.
  CHECK(decode(p, TokenSeq{1}, cfg) == TokenSeq{5, 4, 5});
}

TEST_CASE("invalid configs are rejected") {
  DecodeConfig cfg;
  cfg.temperature = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = DecodeConfig{};
  cfg.top_p = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = DecodeConfig{};
  cfg.repetition_penalty = 0.5;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}
