// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "notecraft/generation.hpp"
#include "notecraft/policy.hpp"
#include "notecraft/synthtask.hpp"
#include "notecraft/training.hpp"

namespace notecraft {

struct PrfScore {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

// Clipped n-gram overlap. F is 0 when either side has no n-grams.
PrfScore rouge_n_score(std::span<const TokenId> candidate, std::span<const TokenId> reference,
                       std::size_t n);
double rouge_n(std::span<const TokenId> candidate, std::span<const TokenId> reference,
               std::size_t n);

std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b);

PrfScore rouge_l_score(std::span<const TokenId> candidate, std::span<const TokenId> reference);
double rouge_l(std::span<const TokenId> candidate, std::span<const TokenId> reference);

// Summary-level LCS. Both sides are split into sentences on `delimiter`; for
// every reference sentence the union of its LCS matches against all candidate
// sentences is counted, with each token credited at most as often as it
// occurs on either side.
PrfScore rouge_lsum_score(std::span<const TokenId> candidate, std::span<const TokenId> reference,
                          TokenId delimiter = Vocab::kNewline);
double rouge_lsum(std::span<const TokenId> candidate, std::span<const TokenId> reference,
                  TokenId delimiter = Vocab::kNewline);

struct RougeScores {
  double rouge1 = 0.0;
  double rouge2 = 0.0;
  double rougeL = 0.0;
  double rougeLsum = 0.0;
};

// Note-level scoring: special tokens are dropped, and the newline token only
// separates sentences for ROUGE-Lsum.
RougeScores score_note(std::span<const TokenId> candidate, std::span<const TokenId> reference);

// Whitespace-token scoring of rendered text; lines are sentences. Used for
// display only.
RougeScores score_text(std::string_view candidate, std::string_view reference);

// exp of the mean NLL over every scored position. Throws InputError on
// tokens outside the policy's vocabulary.
double perplexity(const Policy& policy, std::span<const TrainExample> corpus);
// Sequences scored at every position after the first.
double perplexity(const Policy& policy, std::span<const TokenSeq> corpus);

struct EvalConfig {
  std::vector<double> temperatures = {1.0, 0.6};
  DecodeConfig decode;  // temperature is overridden per entry above
  std::uint64_t seed = 0;
};

// Decodes every case once per call and averages note scores.
RougeScores evaluate_notes(const Policy& policy, const TaskLayout& layout,
                           std::span<const DialogueCase* const> cases, const DecodeConfig& cfg);

struct EvalRow {
  std::string model;    // e.g. "sft", "distill_direct"
  std::string section;  // e.g. "note" or "T=0.6"
  std::size_t round = 0;
  RougeScores scores;
};

struct RoundTable {
  struct Column {
    std::string section;
    std::size_t round = 0;
    std::string metric;
  };
  std::vector<std::string> models;  // sorted
  std::vector<Column> columns;      // section, then metric, then round
  std::vector<std::vector<std::optional<double>>> values;  // [model][column]
  std::vector<std::vector<bool>> top;  // two best per column
};

// Rows are model tags in lexicographic order; columns are R0..Rn per metric
// per section. Throws InputError on an empty input or duplicate cells.
RoundTable round_table(std::span<const EvalRow> rows);

std::string format_round_table(const RoundTable& table);
void write_round_table_csv(const std::filesystem::path& path, const RoundTable& table);

}  // namespace notecraft
