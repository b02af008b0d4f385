// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "notecraft/policy.hpp"
#include "notecraft/training.hpp"
#include "notecraft/vocab.hpp"

namespace notecraft {

enum class RecordSource { kTeacher, kPolicyRound, kHuman, kSimulatedHuman };

// One (x, y⁺, y⁻) triple. `round` is the training round the record was
// collected for; `decode_seed` is the seed the rejected sample was decoded
// with (0 when not produced by the policy).
struct PreferenceRecord {
  std::string case_id;
  TokenSeq prompt;
  TokenSeq preferred;
  TokenSeq rejected;
  RecordSource source = RecordSource::kTeacher;
  int round = 0;
  bool edited = false;
  std::uint64_t decode_seed = 0;

  // preferred != rejected and both EOS-terminated.
  void validate() const;
  // "teacher", "policy-round-<t>", "human", "simulated-human"
  std::string source_tag() const;
};

struct DpoConfig {
  double beta = 0.1;
  double lr = 5e-6;
  std::size_t epochs_per_round = 1;
  std::size_t grad_accum = 8;  // records per optimizer step (micro-batch 1)
  std::size_t warmup_steps = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct DpoTerms {
  double loss = 0.0;
  double margin = 0.0;  // β·(Δ⁺ − Δ⁻)
};

// −log σ(margin); stable for either sign.
double dpo_loss_from_margin(double margin);

// Δ± = log π(y±|x) − log π_ref(y±|x); margin = β(Δ⁺ − Δ⁻); loss = −log σ(margin).
// Throws ContractError unless `reference` is frozen.
DpoTerms dpo_loss(const Policy& policy, const Policy& reference, const PreferenceRecord& record,
                  double beta);

struct DpoGraph {
  Tensor loss;
  double margin = 0.0;
};

// Differentiable form of the loss with the reference log-probabilities
// log π_ref(y⁺|x) and log π_ref(y⁻|x) supplied by the caller.
DpoGraph dpo_loss_graph(const Policy& policy, const PreferenceRecord& record, double ref_preferred,
                        double ref_rejected, double beta, const ForwardOptions& opts = {});

// Fraction of records with margin strictly above zero.
double preference_accuracy(const Policy& policy, const Policy& reference,
                           std::span<const PreferenceRecord> records, double beta);

struct DpoEpochDiagnostics {
  std::size_t epoch = 0;  // 0 = before training
  double accuracy = 0.0;
  double mean_margin = 0.0;
  double mean_loss = 0.0;
};

struct DpoStepDiagnostics {
  std::size_t step = 0;
  double loss = 0.0;
  double accuracy = 0.0;  // over the records of this step, pre-update
  double margin = 0.0;
  double lr = 0.0;
};

struct DpoResult {
  LossTrace trace;
  std::vector<DpoEpochDiagnostics> epochs;
  std::vector<DpoStepDiagnostics> steps;
};

// Minimizes the mean DPO loss over records with AdamW; each optimizer step
// averages over `grad_accum` records. The learning rate follows a
// warmup-cosine schedule over the whole call.
DpoResult train_dpo(Policy& policy, const Policy& reference,
                    std::span<const PreferenceRecord> records, const DpoConfig& cfg,
                    const EpochCallback& on_epoch = {});

// Append-only JSON-lines preference store.
void append_records(const std::filesystem::path& path, std::span<const PreferenceRecord> records);
std::vector<PreferenceRecord> load_records(const std::filesystem::path& path);

// epoch,accuracy,mean_margin,mean_loss
void write_dpo_diagnostics_csv(const std::filesystem::path& path,
                               std::span<const DpoEpochDiagnostics> epochs);

}  // namespace notecraft
