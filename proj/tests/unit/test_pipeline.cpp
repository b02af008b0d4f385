// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <set>

#include "notecraft/errors.hpp"
#include "notecraft/pipeline.hpp"
#include "support/testing.hpp"

using namespace notecraft;

namespace {

struct Fixture {
  TaskSpec spec;
  Corpus corpus;
  TaskLayout layout;
  std::vector<PromptCase> prompts;

  explicit Fixture(Split split = Split::kRlaif) : spec(make_spec()), corpus(generate_corpus(spec)),
                                                 layout(spec) {
    prompts = prompt_cases(layout, cases_in(corpus, split));
  }

  static TaskSpec make_spec() {
    TaskSpec s;
    s.seed = 5;
    s.splits = SplitSizes{20, 4, 6, 3, 2};
    return s;
  }
};

Policy fresh_lm(std::uint64_t seed) { return make_tiny_lm(TinyLmDims{32, 8, 8, 16}, seed); }

RoundPlan small_plan(RoundMode mode) {
  RoundPlan plan;
  plan.mode = mode;
  plan.n_rounds = 2;
  plan.rejected_decode.max_new_tokens = 8;
  plan.rejected_decode.seed = 77;
  plan.dpo.lr = 1e-2;
  plan.dpo.grad_accum = 2;
  plan.dpo.seed = 3;
  return plan;
}

// Bigram table whose greedy continuation after SEP writes `note`.
Policy parrot(std::size_t vocab, std::span<const TokenId> note) {
  std::vector<double> table(vocab * vocab, 0.0);
  TokenId prev = Vocab::kSep;
  for (TokenId t : note) {
    table[static_cast<std::size_t>(prev) * vocab + static_cast<std::size_t>(t)] = 50.0;
    prev = t;
  }
  return make_tabular(TabularPolicy(Tensor({vocab, vocab}, std::move(table))));
}

bool same_logits(const Policy& a, const Policy& b, std::span<const TokenId> seq) {
  return next_token_logits(a, seq) == next_token_logits(b, seq);
}

// Labels only the requests of rounds below `limit`, nearest-to-gold first.
class PartialLabeler final : public LabelSource {
 public:
  explicit PartialLabeler(std::size_t limit) : limit_(limit) {}
  std::vector<std::optional<LabelDecision>> collect(std::span<const LabelRequest> requests) override {
    auto all = sim_.collect(requests);
    for (std::size_t i = 0; i < requests.size(); ++i) {
      if (requests[i].round >= limit_) all[i].reset();
    }
    return all;
  }

 private:
  std::size_t limit_;
  SimulatedLabeler sim_;
};

// Replaces every preferred response by a fixed edit.
class EditingLabeler final : public LabelSource {
 public:
  explicit EditingLabeler(TokenSeq edit) : edit_(std::move(edit)) {}
  std::vector<std::optional<LabelDecision>> collect(std::span<const LabelRequest> requests) override {
    std::vector<std::optional<LabelDecision>> out(requests.size(), LabelDecision{0, 2, edit_});
    return out;
  }

 private:
  TokenSeq edit_;
};

}  // namespace

TEST_CASE("terminate_response appends EOS only when missing") {
  CHECK(terminate_response({}) == TokenSeq{Vocab::kEos});
  CHECK(terminate_response({7, 8}) == TokenSeq{7, 8, Vocab::kEos});
  CHECK(terminate_response({7, Vocab::kEos}) == TokenSeq{7, Vocab::kEos});
}

TEST_CASE("label task ids are opaque and distinct") {
  std::set<std::string> ids;
  for (std::size_t round = 1; round <= 3; ++round) {
    for (int c = 0; c < 50; ++c) {
      const auto id = label_task_id(round, "rlhf-" + std::to_string(c));
      CHECK(id.size() == 16);
      CHECK(id.find("rlhf") == std::string::npos);
      ids.insert(id);
    }
  }
  CHECK(ids.size() == 150);
  CHECK(label_task_id(1, "x") == label_task_id(1, "x"));
}

TEST_CASE("rejected decode seeds differ per round, prompt and sample") {
  const auto plan = small_plan(RoundMode::kDistillDirect);
  std::set<std::uint64_t> seeds;
  for (std::size_t r = 1; r <= 3; ++r)
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 2; ++j) seeds.insert(rejected_decode_seed(plan, r, i, j));
  CHECK(seeds.size() == 60);
}

TEST_CASE("plan validation and RLHF temperature schedule") {
  RoundPlan plan = small_plan(RoundMode::kRlhf);
  CHECK(plan.temperatures_for(1) == std::vector<double>{0.6, 0.6, 0.6});
  CHECK(plan.temperatures_for(2) == std::vector<double>{0.6, 0.4, 0.2});
  CHECK(plan.temperatures_for(5) == std::vector<double>{0.6, 0.4, 0.2});
  plan.n_rounds = 0;
  CHECK_THROWS_AS(plan.validate(), ConfigError);
  CHECK(parse_round_mode(round_mode_name(RoundMode::kDistilledDpo)) == RoundMode::kDistilledDpo);
  CHECK_THROWS_AS(parse_round_mode("sideways"), ConfigError);
}

TEST_CASE("on-policy rounds: rejected samples come from the round's starting checkpoint") {
  Fixture fx;
  const Policy start = fresh_lm(11);
  const TeacherOracle teacher;
  const auto plan = small_plan(RoundMode::kDistillDirect);
  const auto result = run_distill_direct(start, teacher, fx.layout, fx.prompts, plan);

  REQUIRE(result.checkpoints.size() == plan.n_rounds + 1);
  CHECK(same_logits(result.checkpoints[0], start, fx.prompts[0].prompt));
  CHECK_FALSE(same_logits(result.checkpoints[2], start, fx.prompts[0].prompt));
  std::vector<PreferenceRecord> all;
  for (const auto& round : result.rounds) {
    CHECK(round.records.size() + round.dropped_degenerate == fx.prompts.size());
    for (const auto& r : round.records) {
      CHECK(r.source == RecordSource::kPolicyRound);
      CHECK(r.round == static_cast<int>(round.round));
      CHECK(r.rejected.back() == Vocab::kEos);
      all.push_back(r);
    }
  }
  const auto audit = audit_on_policy(result.checkpoints, all, plan.rejected_decode);
  CHECK(audit.checked == all.size());
  CHECK(audit.passed());

  // Each rejected sequence is reproducible only from its own round's start.
  auto shifted = all;
  for (auto& r : shifted) r.round = r.round == 1 ? 2 : 1;
  CHECK_FALSE(audit_on_policy(result.checkpoints, shifted, plan.rejected_decode).passed());

  auto tampered = all;
  tampered[0].rejected.insert(tampered[0].rejected.begin(), 9);
  const auto bad = audit_on_policy(result.checkpoints, tampered, plan.rejected_decode);
  CHECK(bad.mismatched == std::vector<std::string>{tampered[0].case_id});

  // Same inputs, same outcome.
  const auto again = run_distill_direct(start, teacher, fx.layout, fx.prompts, plan);
  REQUIRE(again.rounds.size() == result.rounds.size());
  for (std::size_t k = 0; k < result.rounds.size(); ++k) {
    REQUIRE(again.rounds[k].records.size() == result.rounds[k].records.size());
    for (std::size_t i = 0; i < result.rounds[k].records.size(); ++i) {
      CHECK(again.rounds[k].records[i].rejected == result.rounds[k].records[i].rejected);
    }
  }
}

TEST_CASE("preferred responses are the teacher's notes") {
  Fixture fx;
  const TeacherOracle teacher;
  const auto result =
      run_distill_direct(fresh_lm(12), teacher, fx.layout, fx.prompts, small_plan(RoundMode::kDistillDirect));
  for (const auto& round : result.rounds) {
    for (const auto& r : round.records) {
      const auto it = std::find_if(fx.prompts.begin(), fx.prompts.end(),
                                   [&](const PromptCase& p) { return p.case_id == r.case_id; });
      REQUIRE(it != fx.prompts.end());
      CHECK(r.preferred == it->gold);
      CHECK(r.prompt == it->prompt);
    }
  }
}

TEST_CASE("off-policy rounds reuse the R0 samples") {
  Fixture fx;
  const TeacherOracle teacher;
  const auto plan = small_plan(RoundMode::kDistilledDpo);
  const auto result = run_distilled_dpo(fresh_lm(13), teacher, fx.layout, fx.prompts, plan);
  REQUIRE(result.rounds.size() == 2);
  REQUIRE(result.rounds[0].records.size() == result.rounds[1].records.size());
  for (std::size_t i = 0; i < result.rounds[0].records.size(); ++i) {
    CHECK(result.rounds[0].records[i].rejected == result.rounds[1].records[i].rejected);
    CHECK(result.rounds[0].records[i].decode_seed == result.rounds[1].records[i].decode_seed);
  }
}

TEST_CASE("degenerate pairs are dropped, not trained on") {
  Fixture fx;
  const TeacherOracle teacher;
  auto plan = small_plan(RoundMode::kDistillDirect);
  plan.n_rounds = 1;
  plan.rejected_decode.sample = false;

  const auto& target = fx.prompts[0];
  const Policy echo = parrot(fx.layout.vocab().size(), target.gold);
  const auto one = run_distill_direct(echo, teacher, fx.layout, std::span(&target, 1), plan);
  REQUIRE(one.rounds.size() == 1);
  CHECK(one.rounds[0].dropped_degenerate == 1);
  CHECK(one.rounds[0].records.empty());
  CHECK_FALSE(one.rounds[0].trained);
  CHECK(one.dropped_degenerate() == 1);

  // A prompt whose note differs from the parroted one is kept.
  const auto other = std::find_if(fx.prompts.begin(), fx.prompts.end(),
                                  [&](const PromptCase& p) { return p.gold != target.gold; });
  REQUIRE(other != fx.prompts.end());
  const std::vector<PromptCase> pair{target, *other};
  const auto two = run_distill_direct(echo, teacher, fx.layout, pair, plan);
  CHECK(two.rounds[0].dropped_degenerate == 1);
  REQUIRE(two.rounds[0].records.size() == 1);
  CHECK(two.rounds[0].records[0].case_id == other->case_id);
  CHECK(two.rounds[0].trained);
}

TEST_CASE("RLHF with simulated labels picks nearest and farthest candidates") {
  Fixture fx(Split::kRlhf);
  auto plan = small_plan(RoundMode::kSimulatedRlhf);
  SimulatedLabeler sim;
  const auto result = run_rlhf(fresh_lm(14), fx.prompts, plan, sim);
  REQUIRE(result.status == RlhfStatus::kComplete);
  REQUIRE(result.pipeline.rounds.size() == 2);
  for (std::size_t k = 0; k < 2; ++k) {
    const auto& round = result.pipeline.rounds[k];
    for (const auto& r : round.records) {
      CHECK(r.source == RecordSource::kSimulatedHuman);
      CHECK(r.round == static_cast<int>(k + 1));
      CHECK_FALSE(r.edited);
    }
  }
  // Round-2 candidates come from R1 at the round-2 temperatures.
  for (std::size_t i = 0; i < fx.prompts.size(); ++i) {
    const auto cands = generate_candidates(result.pipeline.checkpoints[1], fx.prompts[i], plan, 2, i);
    REQUIRE(cands.size() == 3);
    CHECK(cands[2].temperature == 0.2);
    std::vector<TokenSeq> seqs;
    for (const auto& c : cands) seqs.push_back(c.tokens);
    const auto [most, least] = simulated_preference(seqs, fx.prompts[i].gold);
    const auto& records = result.pipeline.rounds[1].records;
    const auto it = std::find_if(records.begin(), records.end(), [&](const PreferenceRecord& r) {
      return r.case_id == fx.prompts[i].case_id;
    });
    if (it == records.end()) {
      CHECK(seqs[most] == seqs[least]);
    } else {
      CHECK(it->preferred == seqs[most]);
      CHECK(it->rejected == seqs[least]);
    }
  }
}

TEST_CASE("RLHF stops at the first round lacking labels and resumes identically") {
  Fixture fx(Split::kRlhf);
  const auto plan = small_plan(RoundMode::kRlhf);
  const Policy start = fresh_lm(15);

  PartialLabeler none(1);
  const auto blocked = run_rlhf(start, fx.prompts, plan, none);
  CHECK(blocked.status == RlhfStatus::kAwaitingLabels);
  CHECK(blocked.awaiting_round == 1);
  CHECK(blocked.unlabeled == fx.prompts.size());
  CHECK(blocked.pending.size() == fx.prompts.size());

  PartialLabeler first(2);
  const auto half = run_rlhf(start, fx.prompts, plan, first);
  CHECK(half.status == RlhfStatus::kAwaitingLabels);
  CHECK(half.awaiting_round == 2);

  PartialLabeler all(3);
  const auto done = run_rlhf(start, fx.prompts, plan, all);
  CHECK(done.status == RlhfStatus::kComplete);
  // The pending round-2 requests match what the complete run labeled.
  for (const auto& req : half.pending) {
    const auto cands = generate_candidates(done.pipeline.checkpoints[1], *req.prompt, plan, 2,
                                           static_cast<std::size_t>(req.prompt - fx.prompts.data()));
    REQUIRE(cands.size() == req.candidates.size());
    for (std::size_t k = 0; k < cands.size(); ++k) CHECK(cands[k].tokens == req.candidates[k].tokens);
  }
}

TEST_CASE("edited preferred responses are EOS-terminated and flagged") {
  Fixture fx(Split::kRlhf);
  auto plan = small_plan(RoundMode::kRlhf);
  plan.n_rounds = 1;
  const TokenSeq edit{fx.layout.slot_token(0), fx.layout.value_token(0, 1)};
  EditingLabeler editor(edit);
  const auto result = run_rlhf(fresh_lm(16), fx.prompts, plan, editor);
  REQUIRE(result.status == RlhfStatus::kComplete);
  for (const auto& r : result.pipeline.rounds[0].records) {
    CHECK(r.edited);
    CHECK(r.source == RecordSource::kHuman);
    CHECK(r.preferred == terminate_response(edit));
  }
}
