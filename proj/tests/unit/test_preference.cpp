// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "notecraft/errors.hpp"
#include "notecraft/preference.hpp"
#include "support/testing.hpp"

using namespace notecraft;

TEST_CASE("loss from margin is -log sigmoid and stable") {
  CHECK(dpo_loss_from_margin(0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(dpo_loss_from_margin(2.0) == doctest::Approx(std::log1p(std::exp(-2.0))).epsilon(1e-15));
  CHECK(dpo_loss_from_margin(-2.0) == doctest::Approx(2.0 + std::log1p(std::exp(-2.0))).epsilon(1e-15));
  CHECK(dpo_loss_from_margin(-1000.0) == doctest::Approx(1000.0));
  CHECK(dpo_loss_from_margin(1000.0) >= 0.0);
}

TEST_CASE("identity point: policy equal to reference gives ln 2") {
  Rng rng(1);
  Policy p = testing::random_tabular(10, 2);
  Policy ref = snapshot(p);
  for (int i = 0; i < 100; ++i) {
    const auto t = dpo_loss(p, ref, testing::random_record(rng, 10), 0.1);
    REQUIRE(std::abs(t.loss - std::log(2.0)) <= 1e-9);
    REQUIRE(t.margin == 0.0);
  }
}

TEST_CASE("margin follows its definition") {
  Rng rng(2);
  Policy p = testing::random_tabular(9, 3), ref = snapshot(testing::random_tabular(9, 4));
  for (int i = 0; i < 50; ++i) {
    const auto r = testing::random_record(rng, 9);
    const double dp = log_prob(p, r.prompt, r.preferred) - log_prob(ref, r.prompt, r.preferred);
    const double dn = log_prob(p, r.prompt, r.rejected) - log_prob(ref, r.prompt, r.rejected);
    const auto t = dpo_loss(p, ref, r, 0.25);
    REQUIRE(t.margin == doctest::Approx(0.25 * (dp - dn)).epsilon(1e-12));
    REQUIRE(t.loss == doctest::Approx(-std::log(1.0 / (1.0 + std::exp(-t.margin)))).epsilon(1e-12));
    const auto g = dpo_loss_graph(p, r, log_prob(ref, r.prompt, r.preferred),
                                  log_prob(ref, r.prompt, r.rejected), 0.25);
    REQUIRE(g.loss.item() == doctest::Approx(t.loss).epsilon(1e-12));
    REQUIRE(g.margin == doctest::Approx(t.margin).epsilon(1e-12));
  }
}

TEST_CASE("reference must be frozen") {
  Rng rng(3);
  Policy p = testing::random_tabular(8, 1);
  CHECK_THROWS_AS(dpo_loss(p, p, testing::random_record(rng, 8), 0.1), ContractError);
}

TEST_CASE("DPO gradient matches central differences on a tabular policy") {
  Rng rng(4);
  Policy p = testing::random_tabular(7, 5), ref = snapshot(testing::random_tabular(7, 6));
  for (int trial = 0; trial < 5; ++trial) {
    const auto r = testing::random_record(rng, 7);
    const double rp = log_prob(ref, r.prompt, r.preferred), rn = log_prob(ref, r.prompt, r.rejected);
    const auto params = p.trainable_parameters();
    const auto res = testing::check_gradient(
        [&] { return dpo_loss_graph(p, r, rp, rn, 0.5).loss; }, params, testing::all_coords(params));
    CHECK(res.checked == 49);
    CHECK(res.max_rel_error <= 1e-4);
  }
}

TEST_CASE("training raises accuracy and margin on a learnable set") {
  Rng rng(5);
  Policy p = testing::random_tabular(8, 7, 0.1);
  Policy ref = snapshot(p);
  std::vector<PreferenceRecord> records;
  // Separable: preferred responses use tokens 5-7, rejected ones 3-4.
  for (int i = 0; i < 32; ++i) {
    PreferenceRecord r;
    r.case_id = "c" + std::to_string(i);
    r.prompt = testing::random_tokens(rng, 1 + rng.below(3), 3, 8);
    r.preferred = testing::random_tokens(rng, 1 + rng.below(3), 5, 8);
    r.rejected = testing::random_tokens(rng, 1 + rng.below(3), 3, 5);
    r.preferred.push_back(Vocab::kEos);
    r.rejected.push_back(Vocab::kEos);
    records.push_back(std::move(r));
  }
  DpoConfig cfg;
  cfg.lr = 5e-2;
  cfg.epochs_per_round = 4;
  cfg.seed = 1;
  const auto result = train_dpo(p, ref, records, cfg);
  REQUIRE(result.epochs.size() == 5);
  CHECK(result.epochs.front().accuracy == 0.0);  // margin 0 counts as not preferred
  CHECK(result.epochs.front().mean_loss == doctest::Approx(std::log(2.0)));
  CHECK(result.epochs.back().accuracy > 0.9);
  CHECK(result.epochs.back().mean_margin > 0.0);
  CHECK(result.steps.size() == 4 * 4);
  CHECK(preference_accuracy(p, ref, records, cfg.beta) == doctest::Approx(result.epochs.back().accuracy));
}

TEST_CASE("train_dpo validates its inputs") {
  Rng rng(6);
  Policy p = testing::random_tabular(8, 1);
  Policy ref = snapshot(p);
  std::vector<PreferenceRecord> none;
  CHECK_THROWS_AS(train_dpo(p, ref, none, DpoConfig{}), InputError);
  auto bad = testing::random_record(rng, 8);
  bad.rejected = bad.preferred;
  std::vector<PreferenceRecord> one{bad};
  CHECK_THROWS_AS(train_dpo(p, ref, one, DpoConfig{}), InputError);
  bad = testing::random_record(rng, 8);
  bad.preferred.pop_back();
  one = {bad};
  CHECK_THROWS_AS(train_dpo(p, ref, one, DpoConfig{}), InputError);
  DpoConfig c;
  c.beta = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("records round-trip through the store and keep provenance") {
  Rng rng(7);
  const auto dir = testing::temp_dir("records");
  std::vector<PreferenceRecord> recs;
  for (int i = 0; i < 5; ++i) {
    auto r = testing::random_record(rng, 9);
    r.source = i % 2 ? RecordSource::kPolicyRound : RecordSource::kHuman;
    r.round = i;
    r.edited = i == 3;
    r.decode_seed = 1234567890123ull + i;
    recs.push_back(r);
  }
  append_records(dir / "r.jsonl", std::span(recs).first(2));
  append_records(dir / "r.jsonl", std::span(recs).subspan(2));
  const auto back = load_records(dir / "r.jsonl");
  REQUIRE(back.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(back[i].prompt == recs[i].prompt);
    CHECK(back[i].preferred == recs[i].preferred);
    CHECK(back[i].rejected == recs[i].rejected);
    CHECK(back[i].source == recs[i].source);
    CHECK(back[i].round == recs[i].round);
    CHECK(back[i].edited == recs[i].edited);
    CHECK(back[i].decode_seed == recs[i].decode_seed);
  }
  CHECK(recs[1].source_tag() == "policy-round-1");
  CHECK(recs[0].source_tag() == "human");
  std::filesystem::remove_all(dir);
}
