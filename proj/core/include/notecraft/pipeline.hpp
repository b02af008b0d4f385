// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "notecraft/generation.hpp"
#include "notecraft/policy.hpp"
#include "notecraft/preference.hpp"
#include "notecraft/synthtask.hpp"

namespace notecraft {

enum class RoundMode { kDistilledDpo, kDistillDirect, kRlhf, kSimulatedRlhf };

const char* round_mode_name(RoundMode mode);
RoundMode parse_round_mode(const std::string& name);

struct RoundPlan {
  RoundMode mode = RoundMode::kDistillDirect;
  std::size_t n_rounds = 3;
  // Sampling config for rejected responses; its seed is the base of every
  // per-record decode seed.
  DecodeConfig rejected_decode;
  std::size_t samples_per_prompt = 1;
  // RLHF: candidate temperatures per round; the last entry repeats.
  std::vector<std::vector<double>> candidate_temperatures = {{0.6, 0.6, 0.6}, {0.6, 0.4, 0.2}};
  DpoConfig dpo;
  bool eval_after_each_round = true;

  void validate() const;
  // Temperatures used for RLHF candidates in round `round` (1-based).
  const std::vector<double>& temperatures_for(std::size_t round) const;
};

// One prompt of a round, with what the teacher or the gold note says.
struct PromptCase {
  std::string case_id;
  TokenSeq prompt;
  TokenSeq dialogue;
  std::size_t section = 0;
  TokenSeq gold;
};

std::vector<PromptCase> prompt_cases(const TaskLayout& layout,
                                     std::span<const DialogueCase* const> cases);

// Appends EOS when a sampled response hit max_new_tokens without one.
TokenSeq terminate_response(TokenSeq response);

// Seed of the j-th rejected sample for prompt `index` drawn in `round`.
std::uint64_t rejected_decode_seed(const RoundPlan& plan, std::size_t round, std::size_t index,
                                   std::size_t sample);

struct RoundOutcome {
  std::size_t round = 0;  // 1-based
  std::vector<PreferenceRecord> records;  // kept records
  std::size_t dropped_degenerate = 0;
  DpoResult dpo;  // empty when every record was dropped
  bool trained = false;
};

struct PipelineResult {
  RoundMode mode = RoundMode::kDistillDirect;
  std::vector<Policy> checkpoints;  // R0..Rn, frozen snapshots
  std::vector<RoundOutcome> rounds;
  std::size_t dropped_degenerate() const;
};

// On-policy RLAIF: each round samples the rejected response from the current
// policy and takes the teacher's note as preferred; the reference is a
// snapshot of the policy at the start of the round.
PipelineResult run_distill_direct(const Policy& policy, const TeacherOracle& teacher,
                                  const TaskLayout& layout, std::span<const PromptCase> prompts,
                                  const RoundPlan& plan);

// Off-policy baseline: rejected samples come from R0 once and are reused in
// every round.
PipelineResult run_distilled_dpo(const Policy& policy, const TeacherOracle& teacher,
                                 const TaskLayout& layout, std::span<const PromptCase> prompts,
                                 const RoundPlan& plan);

struct AuditReport {
  std::size_t checked = 0;
  std::size_t matched = 0;
  std::vector<std::string> mismatched;  // case ids
  bool passed() const { return checked == matched; }
};

// Re-decodes every record's rejected sequence from the checkpoint the
// record's round started from, with the logged seed.
AuditReport audit_on_policy(std::span<const Policy> checkpoints,
                            std::span<const PreferenceRecord> records,
                            const DecodeConfig& rejected_decode);

// ---- RLHF -------------------------------------------------------------------

struct Candidate {
  TokenSeq tokens;  // EOS-terminated
  double temperature = 0.0;
  std::uint64_t decode_seed = 0;
};

// Opaque id of the labeling task for (round, case), so clients cannot read
// round provenance from it.
std::string label_task_id(std::size_t round, const std::string& case_id);

struct LabelRequest {
  std::string task_id;
  std::size_t round = 0;
  const PromptCase* prompt = nullptr;
  std::vector<Candidate> candidates;  // true order
};

// Indices refer to the true candidate order.
struct LabelDecision {
  std::size_t most = 0;
  std::size_t least = 1;
  std::optional<TokenSeq> edited_preferred;
};

class LabelSource {
 public:
  virtual ~LabelSource() = default;
  // One entry per request; nullopt while the request is still unlabeled.
  virtual std::vector<std::optional<LabelDecision>> collect(
      std::span<const LabelRequest> requests) = 0;
  // Provenance tag written into the resulting records.
  virtual RecordSource record_source() const { return RecordSource::kHuman; }
};

// Most/least preferred by edit distance to the gold note.
class SimulatedLabeler final : public LabelSource {
 public:
  std::vector<std::optional<LabelDecision>> collect(
      std::span<const LabelRequest> requests) override;
  RecordSource record_source() const override { return RecordSource::kSimulatedHuman; }
};

enum class RlhfStatus { kComplete, kAwaitingLabels };

struct RlhfResult {
  RlhfStatus status = RlhfStatus::kComplete;
  PipelineResult pipeline;
  std::size_t awaiting_round = 0;  // when status is kAwaitingLabels
  std::size_t unlabeled = 0;
  std::vector<LabelRequest> pending;  // requests of the blocked round
};

std::vector<Candidate> generate_candidates(const Policy& policy, const PromptCase& prompt,
                                           const RoundPlan& plan, std::size_t round,
                                           std::size_t index);

// Per round: three candidates per prompt at the round's temperatures, a
// (most, least) decision from `labels`, then DPO on (most or its edit, least).
// Stops with kAwaitingLabels when the source has not labeled every request.
RlhfResult run_rlhf(const Policy& policy, std::span<const PromptCase> prompts,
                    const RoundPlan& plan, LabelSource& labels);

}  // namespace notecraft
