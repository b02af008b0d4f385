// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

// Run configuration. The JSON file may set any subset of keys; missing keys
// keep their defaults, and command-line overrides are applied last. Every
// seed inside a section is derived from the top-level `seed` by resolved().

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "notecraft/costmodel.hpp"
#include "notecraft/generation.hpp"
#include "notecraft/pipeline.hpp"
#include "notecraft/policy.hpp"
#include "notecraft/preference.hpp"
#include "notecraft/synthtask.hpp"
#include "notecraft/training.hpp"

namespace notecraft {

struct RlaifSettings {
  std::size_t n_rounds = 3;
  std::size_t samples_per_prompt = 1;
  DecodeConfig rejected_decode;
  DpoConfig dpo;
};

struct RlhfSettings {
  std::size_t n_rounds = 2;
  std::vector<std::vector<double>> candidate_temperatures = {{0.6, 0.6, 0.6}, {0.6, 0.4, 0.2}};
  DecodeConfig candidate_decode;
  DpoConfig dpo;
  std::string labels = "simulated";          // simulated | human
  std::string from = "rlaif_distill_direct";  // stage whose final checkpoint starts RLHF
  double wait_seconds = 0.0;                 // human labels: poll this long before giving up
};

struct EvalSettings {
  std::vector<double> temperatures = {1.0, 0.6};
  DecodeConfig decode;
};

struct LabelServeSettings {
  std::string host = "127.0.0.1";
  int port = 8080;
};

struct CostSettings {
  Workload workload;
  std::string pricing;  // empty: the bundled table
};

struct RunConfig {
  std::string out_dir = "runs/default";
  std::uint64_t seed = 1;
  TaskSpec task;
  TinyLmDims model;
  TeacherOracle teacher;
  TrainRunConfig pretrain;
  TrainRunConfig sft;
  bool lora_enabled = false;  // adapters for SFT and the preference stages
  LoraConfig lora;
  RlaifSettings rlaif;
  RlhfSettings rlhf;
  EvalSettings eval;
  LabelServeSettings label_server;
  CostSettings cost;

  RunConfig();
  // Copy with every section seed derived from `seed` and the model
  // vocabulary checked against the task.
  RunConfig resolved() const;
  void validate() const;
};

void to_json(nlohmann::json& j, const RunConfig& v);
void from_json(const nlohmann::json& j, RunConfig& v);

// defaults <- file (optional) <- overrides ("a.b.c=value"; the value is
// parsed as JSON and falls back to a plain string).
RunConfig load_run_config(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides);
void apply_override(nlohmann::json& doc, std::string_view assignment);

// Canonical JSON text of a resolved config (sorted keys, two-space indent).
std::string canonical_json(const nlohmann::json& j);

// Git blob hash: SHA-1 over "blob <size>\0" followed by the content.
std::string git_blob_sha1(std::string_view content);
std::string git_blob_sha1_file(const std::filesystem::path& path);

RoundPlan rlaif_plan(const RunConfig& cfg, RoundMode mode);
RoundPlan rlhf_plan(const RunConfig& cfg);

}  // namespace notecraft
