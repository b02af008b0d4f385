// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/pipeline.hpp"

#include <fmt/format.h>

#include "notecraft/errors.hpp"
#include "notecraft/rng.hpp"

namespace notecraft {

const char* round_mode_name(RoundMode mode) {
  switch (mode) {
    case RoundMode::kDistilledDpo: return "distilled_dpo";
    case RoundMode::kDistillDirect: return "distill_direct";
    case RoundMode::kRlhf: return "rlhf";
    case RoundMode::kSimulatedRlhf: return "simulated_rlhf";
  }
  return "?";
}

RoundMode parse_round_mode(const std::string& name) {
  for (auto m : {RoundMode::kDistilledDpo, RoundMode::kDistillDirect, RoundMode::kRlhf,
                 RoundMode::kSimulatedRlhf}) {
    if (name == round_mode_name(m)) return m;
  }
  throw ConfigError(fmt::format("unknown round mode '{}'", name));
}

void RoundPlan::validate() const {
  if (n_rounds == 0) throw ConfigError("plan: n_rounds must be >= 1");
  if (samples_per_prompt == 0) throw ConfigError("plan: samples_per_prompt must be >= 1");
  if (candidate_temperatures.empty()) throw ConfigError("plan: no candidate temperatures");
  for (const auto& temps : candidate_temperatures) {
    if (temps.size() < 2) throw ConfigError("plan: RLHF needs at least two candidates");
    for (double t : temps) {
      if (!(t > 0.0)) throw ConfigError("plan: candidate temperatures must be > 0");
    }
  }
  rejected_decode.validate();
  dpo.validate();
}

const std::vector<double>& RoundPlan::temperatures_for(std::size_t round) const {
  const std::size_t i = round == 0 ? 0 : round - 1;
  return candidate_temperatures[std::min(i, candidate_temperatures.size() - 1)];
}

std::vector<PromptCase> prompt_cases(const TaskLayout& layout,
                                     std::span<const DialogueCase* const> cases) {
  std::vector<PromptCase> out;
  out.reserve(cases.size());
  for (const auto* c : cases) {
    out.push_back({c->case_id, make_prompt(layout, *c), c->dialogue, c->section, c->gold_note});
  }
  return out;
}

TokenSeq terminate_response(TokenSeq response) {
  if (response.empty() || response.back() != Vocab::kEos) response.push_back(Vocab::kEos);
  return response;
}

std::uint64_t rejected_decode_seed(const RoundPlan& plan, std::size_t round, std::size_t index,
                                   std::size_t sample) {
  return derive_seed(plan.rejected_decode.seed, {0x2e1ec7, round, index, sample});
}

std::string label_task_id(std::size_t round, const std::string& case_id) {
  return fmt::format("{:016x}", fnv1a(fmt::format("r{}-{}", round, case_id)));
}

std::size_t PipelineResult::dropped_degenerate() const {
  std::size_t n = 0;
  for (const auto& r : rounds) n += r.dropped_degenerate;
  return n;
}

namespace {

std::vector<TokenSeq> teacher_notes(const TeacherOracle& teacher, const TaskLayout& layout,
                                    std::span<const PromptCase> prompts, std::size_t round) {
  std::vector<TokenSeq> out;
  out.reserve(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    try {
      out.push_back(teacher_note(teacher, layout, prompts[i].dialogue, prompts[i].section,
                                 derive_seed(round, {i})));
    } catch (const InputError& e) {
      throw InputError(fmt::format("round {} aborted: teacher failed on case {}: {}", round,
                                   prompts[i].case_id, e.what()));
    }
  }
  return out;
}

struct Sample {
  TokenSeq tokens;
  std::uint64_t seed = 0;
};

// samples[i][j]: j-th rejected sample for prompt i.
std::vector<std::vector<Sample>> sample_rejected(const Policy& policy,
                                                 std::span<const PromptCase> prompts,
                                                 const RoundPlan& plan, std::size_t round) {
  std::vector<std::vector<Sample>> out(prompts.size());
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    for (std::size_t j = 0; j < plan.samples_per_prompt; ++j) {
      DecodeConfig cfg = plan.rejected_decode;
      cfg.seed = rejected_decode_seed(plan, round, i, j);
      out[i].push_back({terminate_response(decode(policy, prompts[i].prompt, cfg)), cfg.seed});
    }
  }
  return out;
}

// Drops preferred == rejected pairs, trains one DPO round on the rest and
// snapshots the result.
void finish_round(Policy& current, RoundOutcome& outcome, std::vector<PreferenceRecord> candidates,
                  const RoundPlan& plan, PipelineResult& result) {
  for (auto& r : candidates) {
    if (r.preferred == r.rejected) {
      ++outcome.dropped_degenerate;
    } else {
      outcome.records.push_back(std::move(r));
    }
  }
  if (!outcome.records.empty()) {
    const Policy reference = snapshot(current);
    DpoConfig cfg = plan.dpo;
    cfg.seed = derive_seed(plan.dpo.seed, {0xd90, outcome.round});
    outcome.dpo = train_dpo(current, reference, outcome.records, cfg);
    outcome.trained = true;
  }
  result.checkpoints.push_back(snapshot(current));
  result.rounds.push_back(std::move(outcome));
}

PipelineResult run_rlaif(const Policy& policy, const TeacherOracle& teacher,
                         const TaskLayout& layout, std::span<const PromptCase> prompts,
                         const RoundPlan& plan, bool on_policy) {
  plan.validate();
  if (prompts.empty()) throw InputError("rlaif: no prompts");
  PipelineResult result;
  result.mode = on_policy ? RoundMode::kDistillDirect : RoundMode::kDistilledDpo;
  Policy current = thaw(policy);
  result.checkpoints.push_back(snapshot(current));

  std::vector<std::vector<Sample>> fixed;
  for (std::size_t round = 1; round <= plan.n_rounds; ++round) {
    const auto preferred = teacher_notes(teacher, layout, prompts, round);
    std::vector<std::vector<Sample>> fresh;
    if (on_policy || round == 1) fresh = sample_rejected(current, prompts, plan, round);
    if (!on_policy && round == 1) fixed = fresh;
    const auto& rejected = on_policy ? fresh : fixed;

    std::vector<PreferenceRecord> records;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      for (const auto& s : rejected[i]) {
        PreferenceRecord r;
        r.case_id = prompts[i].case_id;
        r.prompt = prompts[i].prompt;
        r.preferred = preferred[i];
        r.rejected = s.tokens;
        r.source = RecordSource::kPolicyRound;
        r.round = static_cast<int>(round);
        r.decode_seed = s.seed;
        records.push_back(std::move(r));
      }
    }
    RoundOutcome outcome;
    outcome.round = round;
    finish_round(current, outcome, std::move(records), plan, result);
  }
  return result;
}

}  // namespace

PipelineResult run_distill_direct(const Policy& policy, const TeacherOracle& teacher,
                                  const TaskLayout& layout, std::span<const PromptCase> prompts,
                                  const RoundPlan& plan) {
  return run_rlaif(policy, teacher, layout, prompts, plan, true);
}

PipelineResult run_distilled_dpo(const Policy& policy, const TeacherOracle& teacher,
                                 const TaskLayout& layout, std::span<const PromptCase> prompts,
                                 const RoundPlan& plan) {
  return run_rlaif(policy, teacher, layout, prompts, plan, false);
}

AuditReport audit_on_policy(std::span<const Policy> checkpoints,
                            std::span<const PreferenceRecord> records,
                            const DecodeConfig& rejected_decode) {
  AuditReport report;
  for (const auto& r : records) {
    ++report.checked;
    const auto start = static_cast<std::size_t>(r.round) - 1;
    bool ok = r.round >= 1 && start < checkpoints.size();
    if (ok) {
      DecodeConfig cfg = rejected_decode;
      cfg.seed = r.decode_seed;
      ok = terminate_response(decode(checkpoints[start], r.prompt, cfg)) == r.rejected;
    }
    if (ok) {
      ++report.matched;
    } else {
      report.mismatched.push_back(r.case_id);
    }
  }
  return report;
}

std::vector<std::optional<LabelDecision>> SimulatedLabeler::collect(
    std::span<const LabelRequest> requests) {
  std::vector<std::optional<LabelDecision>> out;
  out.reserve(requests.size());
  for (const auto& req : requests) {
    std::vector<TokenSeq> texts;
    for (const auto& c : req.candidates) texts.push_back(c.tokens);
    const auto [most, least] = simulated_preference(texts, req.prompt->gold);
    out.push_back(LabelDecision{most, least, std::nullopt});
  }
  return out;
}

std::vector<Candidate> generate_candidates(const Policy& policy, const PromptCase& prompt,
                                           const RoundPlan& plan, std::size_t round,
                                           std::size_t index) {
  std::vector<Candidate> out;
  const auto& temps = plan.temperatures_for(round);
  for (std::size_t k = 0; k < temps.size(); ++k) {
    DecodeConfig cfg = plan.rejected_decode;
    cfg.temperature = temps[k];
    cfg.seed = derive_seed(plan.rejected_decode.seed, {0x41f, round, index, k});
    out.push_back({terminate_response(decode(policy, prompt.prompt, cfg)), temps[k], cfg.seed});
  }
  return out;
}

RlhfResult run_rlhf(const Policy& policy, std::span<const PromptCase> prompts,
                    const RoundPlan& plan, LabelSource& labels) {
  plan.validate();
  if (prompts.empty()) throw InputError("rlhf: no prompts");
  const bool simulated = labels.record_source() == RecordSource::kSimulatedHuman;
  RlhfResult out;
  out.pipeline.mode = simulated ? RoundMode::kSimulatedRlhf : RoundMode::kRlhf;
  Policy current = thaw(policy);
  out.pipeline.checkpoints.push_back(snapshot(current));

  for (std::size_t round = 1; round <= plan.n_rounds; ++round) {
    std::vector<LabelRequest> requests;
    for (std::size_t i = 0; i < prompts.size(); ++i) {
      requests.push_back({label_task_id(round, prompts[i].case_id), round, &prompts[i],
                          generate_candidates(current, prompts[i], plan, round, i)});
    }
    const auto decisions = labels.collect(requests);
    if (decisions.size() != requests.size()) {
      throw ContractError("rlhf: label source returned the wrong number of decisions");
    }
    std::size_t missing = 0;
    for (const auto& d : decisions) missing += !d.has_value();
    if (missing > 0) {
      out.status = RlhfStatus::kAwaitingLabels;
      out.awaiting_round = round;
      out.unlabeled = missing;
      out.pending = std::move(requests);
      return out;
    }

    std::vector<PreferenceRecord> records;
    for (std::size_t i = 0; i < requests.size(); ++i) {
      const auto& d = *decisions[i];
      const auto& cands = requests[i].candidates;
      if (d.most >= cands.size() || d.least >= cands.size() || d.most == d.least) {
        throw InputError(fmt::format("rlhf: invalid label for task {}", requests[i].task_id));
      }
      PreferenceRecord r;
      r.case_id = prompts[i].case_id;
      r.prompt = prompts[i].prompt;
      r.preferred = d.edited_preferred ? terminate_response(*d.edited_preferred)
                                       : cands[d.most].tokens;
      r.rejected = cands[d.least].tokens;
      r.source = labels.record_source();
      r.round = static_cast<int>(round);
      r.edited = d.edited_preferred.has_value();
      r.decode_seed = cands[d.least].decode_seed;
      records.push_back(std::move(r));
    }
    RoundOutcome outcome;
    outcome.round = round;
    finish_round(current, outcome, std::move(records), plan, out.pipeline);
  }
  return out;
}

}  // namespace notecraft
