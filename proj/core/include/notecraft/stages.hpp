// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

// Pipeline stages over a run directory. Each stage reads the artifacts of the
// stages it depends on, writes its own under <out_dir>/<stage>/, and records
// an input hash plus output hashes in <stage>/stage.json. A stage whose input
// hash and outputs still match is skipped unless forced.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "notecraft/labelstore.hpp"
#include "notecraft/pipeline.hpp"
#include "notecraft/runconfig.hpp"
#include "notecraft/synthtask.hpp"

namespace notecraft {

enum class StageStatus { kRan, kCached, kAwaitingLabels };

const char* stage_status_name(StageStatus status);

struct StageResult {
  std::string stage;
  StageStatus status = StageStatus::kRan;
  std::string input_hash;
  std::string message;  // human-readable detail, may be empty

  nlohmann::json to_json() const;
};

struct StageOptions {
  bool force = false;
};

// Stage directory names.
inline constexpr const char* kGenDataStage = "gen-data";
inline constexpr const char* kPretrainStage = "pretrain";
inline constexpr const char* kSftStage = "sft";
inline constexpr const char* kRlhfStage = "rlhf";
inline constexpr const char* kEvalStage = "eval";
inline constexpr const char* kCostStage = "cost";
inline constexpr const char* kReportStage = "report";
// "rlaif_distill_direct" or "rlaif_distilled_dpo".
std::string rlaif_stage_name(RoundMode mode);

// Exclusive writer lock on a run directory (<out_dir>/.lock holding the
// owner's pid). A lock left by a dead process is taken over; a live owner
// raises ConflictError.
class RunLock {
 public:
  explicit RunLock(const std::filesystem::path& out_dir);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

// Location-independent config document: the resolved config without out_dir.
nlohmann::json config_document(const RunConfig& cfg);
// Git blob hash of canonical_json(config_document(cfg)).
std::string config_hash(const RunConfig& cfg);

// Writes config.json, config.sha1 and seeds.json into the run directory.
void write_run_config(const RunConfig& cfg);

// Each call takes the run lock, validates the config and writes it out first.
StageResult gen_data_stage(const RunConfig& cfg, const StageOptions& opts = {});
StageResult pretrain_stage(const RunConfig& cfg, const StageOptions& opts = {});
StageResult sft_stage(const RunConfig& cfg, const StageOptions& opts = {});
StageResult rlaif_stage(const RunConfig& cfg, RoundMode mode, const StageOptions& opts = {});
// Simulated or human labels per cfg.rlhf.labels. With human labels the stage
// returns kAwaitingLabels until every task of the blocking round is labeled;
// rerunning resumes deterministically.
StageResult rlhf_stage(const RunConfig& cfg, const StageOptions& opts = {});
StageResult eval_stage(const RunConfig& cfg, const StageOptions& opts = {});
StageResult cost_stage(const RunConfig& cfg, const StageOptions& opts = {});
StageResult report_stage(const RunConfig& cfg, const StageOptions& opts = {});

// gen-data, pretrain, sft, both RLAIF modes, rlhf, eval, cost, report. Stops
// early when rlhf is awaiting labels.
std::vector<StageResult> run_all(const RunConfig& cfg, const StageOptions& opts = {});

// Label store of the RLHF stage (<out_dir>/rlhf/labels).
LabelStore open_label_store(const RunConfig& cfg);

// Dataset and token files written by gen-data.
void write_dataset(const std::filesystem::path& path, const Corpus& corpus, const Vocab& vocab);
Corpus read_dataset(const std::filesystem::path& path);
// "NCTK" u32 version=1, u64 vocab hash, u64 count, i32 tokens[count]; little-endian.
void write_token_file(const std::filesystem::path& path, std::span<const TokenId> tokens,
                      std::uint64_t vocab_hash);
TokenSeq read_token_file(const std::filesystem::path& path, std::uint64_t vocab_hash);

}  // namespace notecraft
