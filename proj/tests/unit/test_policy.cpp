// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "notecraft/errors.hpp"
#include "notecraft/policy.hpp"
#include "support/testing.hpp"

using namespace notecraft;

namespace {

const TinyLm& tiny(const Policy& p) { return dynamic_cast<const TinyLm&>(p.model()); }

// Gives every adapter a non-zero B so merging has something to fold in.
Policy perturb_adapters(const Policy& adapted, std::uint64_t seed) {
  Policy out = adapted;
  auto& lm = dynamic_cast<TinyLm&>(out.mutable_model());
  Rng rng(seed);
  for (auto target : {LoraTarget::kW1, LoraTarget::kW2}) {
    if (!lm.adapter(target)) continue;
    LoraAdapter a = *lm.adapter(target);
    for (auto& v : a.b.mutable_values()) v = rng.uniform(-0.3, 0.3);
    lm.set_adapter(a);
  }
  return out;
}

double max_logit_gap(const Policy& a, const Policy& b, const TokenSeq& seq) {
  const Tensor la = a.model().logits(seq, 0, seq.size()), lb = b.model().logits(seq, 0, seq.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < la.numel(); ++i) worst = std::max(worst, std::abs(la.at(i) - lb.at(i)));
  return worst;
}

}  // namespace

TEST_CASE("LoRA scale is alpha over rank") {
  LoraAdapter a;
  a.rank = 8;
  a.alpha = 32.0;
  CHECK(a.scale() == 4.0);
}

TEST_CASE("attaching LoRA leaves the function unchanged exactly") {
  Rng rng(1);
  Policy base = testing::small_tiny_lm(3);
  Policy adapted = attach_lora(base, LoraConfig{}, 9);
  for (int trial = 0; trial < 50; ++trial) {
    const TokenSeq seq = testing::random_tokens(rng, 1 + rng.below(10), 0, 12);
    REQUIRE(max_logit_gap(base, adapted, seq) == 0.0);
  }
  // Only adapter matrices train: rank·(in+out) per target.
  const auto& d = tiny(base).dims();
  const std::size_t in1 = d.context * d.embed;
  CHECK(adapted.trainable_parameter_count() == 8 * (in1 + d.hidden) + 8 * (d.hidden + d.vocab));
}

TEST_CASE("merging LoRA reproduces the adapted function") {
  Rng rng(2);
  Policy adapted = perturb_adapters(attach_lora(testing::small_tiny_lm(4), LoraConfig{}, 5), 6);
  Policy merged = merge_lora(Policy(adapted));
  CHECK_FALSE(tiny(merged).has_adapters());
  for (int trial = 0; trial < 100; ++trial) {
    const TokenSeq seq = testing::random_tokens(rng, 1 + rng.below(12), 0, 12);
    REQUIRE(max_logit_gap(adapted, merged, seq) <= 1e-9);
  }
  CHECK_THROWS_AS(merge_lora(testing::small_tiny_lm(1)), ContractError);
}

TEST_CASE("merge folds (alpha/r)(BA) transposed into W0") {
  LoraConfig cfg;
  cfg.rank = 2;
  cfg.alpha = 3.0;
  cfg.targets = {LoraTarget::kW2};
  Policy adapted = perturb_adapters(attach_lora(testing::small_tiny_lm(8), cfg, 1), 2);
  const auto& lm = tiny(adapted);
  const LoraAdapter& ad = *lm.adapter(LoraTarget::kW2);
  const Tensor w0 = lm.w2().clone();
  Policy merged = merge_lora(Policy(adapted));
  const Tensor& w = tiny(merged).w2();
  const std::size_t in = w0.dim(0), out = w0.dim(1);
  for (std::size_t i = 0; i < in; ++i) {
    for (std::size_t o = 0; o < out; ++o) {
      double delta = 0.0;  // (B·A)[o][i]
      for (std::size_t r = 0; r < cfg.rank; ++r) delta += ad.b.at(o, r) * ad.a.at(r, i);
      CHECK(w.at(i, o) == doctest::Approx(w0.at(i, o) + 1.5 * delta).epsilon(1e-13));
    }
  }
}

TEST_CASE("snapshot is frozen and independent; thaw trains again") {
  Policy p = testing::small_tiny_lm(1);
  Policy frozen = snapshot(p);
  CHECK(frozen.frozen());
  CHECK(frozen.trainable_parameters().empty());
  p.trainable_parameters()[0].mutable_values()[0] += 1.0;
  CHECK(tiny(frozen).embed().at(0) != tiny(p).embed().at(0));
  Policy warm = thaw(frozen);
  CHECK_FALSE(warm.frozen());
  CHECK(warm.trainable_parameter_count() == p.trainable_parameter_count());
  Policy adapted = attach_lora(p, LoraConfig{}, 1);
  CHECK(thaw(snapshot(adapted)).trainable_parameter_count() == adapted.trainable_parameter_count());
}

TEST_CASE("log_prob is the sum of per-token log-probabilities") {
  Rng rng(3);
  Policy p = testing::random_tabular(9, 4);
  for (int trial = 0; trial < 50; ++trial) {
    const TokenSeq prompt = testing::random_tokens(rng, 1 + rng.below(4), 0, 9);
    const TokenSeq resp = testing::random_response(rng, 9, 0, 5);
    TokenSeq ctx = prompt;
    double manual = 0.0;
    for (TokenId t : resp) {
      manual += next_token_log_probs(p, ctx)[static_cast<std::size_t>(t)];
      ctx.push_back(t);
    }
    REQUIRE(log_prob(p, prompt, resp) == doctest::Approx(manual).epsilon(1e-12));
  }
  CHECK_THROWS_AS(log_prob(p, TokenSeq{1}, TokenSeq{5}), InputError);
}

TEST_CASE("tabular next-token distribution is the softmax of the previous token's row") {
  Policy p = testing::random_tabular(6, 2);
  const auto& table = dynamic_cast<const TabularPolicy&>(p.model()).table();
  const auto lp = next_token_log_probs(p, TokenSeq{1, 4});
  double z = 0.0;
  for (std::size_t j = 0; j < 6; ++j) z += std::exp(table.at(4, j));
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(lp[j] == doctest::Approx(table.at(4, j) - std::log(z)).epsilon(1e-12));
  }
}
