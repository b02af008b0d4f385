// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "notecraft/rng.hpp"
#include "notecraft/vocab.hpp"

namespace notecraft {

enum class Split { kSft, kRlaif, kRlhf, kValidation };

const char* split_name(Split split);
Split parse_split(const std::string& name);

struct SplitSizes {
  std::size_t pretrain_docs = 1500;
  std::size_t sft = 256;
  std::size_t rlaif = 256;
  std::size_t rlhf = 64;
  std::size_t validation = 160;
};

// Synthetic dialogue -> note transduction. A dialogue mentions every slot
// once as a (slot tag, value) pair, in random order, with filler tokens
// sprinkled between mentions. The note lists the slots in canonical order,
// one "tag value" line per slot, lines separated by the newline token and the
// note terminated by EOS. With note_sections = 2 the slots are divided into
// two frames and every dialogue yields one prompt per frame.
struct TaskSpec {
  std::size_t n_slots = 2;
  std::size_t values_per_slot = 6;
  std::size_t n_filler = 6;
  double filler_rate = 0.15;  // in [0, 1): chance of another filler at each gap
  std::size_t note_sections = 1;
  std::size_t vocab_limit = 32;  // model vocabulary the task must fit into
  std::uint64_t seed = 1;
  SplitSizes splits;

  void validate() const;
};

// Token-id layout of a task vocabulary.
class TaskLayout {
 public:
  explicit TaskLayout(const TaskSpec& spec);

  const TaskSpec& spec() const { return spec_; }
  const Vocab& vocab() const { return vocab_; }
  TokenId slot_token(std::size_t slot) const;
  TokenId value_token(std::size_t slot, std::size_t value) const;
  TokenId filler_token(std::size_t index) const;
  TokenId section_token(std::size_t section) const;

  bool is_slot(TokenId t) const;
  bool is_value(TokenId t) const;
  bool is_filler(TokenId t) const;
  std::size_t slot_of(TokenId tag_or_value) const;
  std::size_t value_index(TokenId value) const;

  // Slots belonging to a note section, in canonical order.
  std::vector<std::size_t> section_slots(std::size_t section) const;
  // Tokens a noisy teacher may substitute: slot tags, values and filler.
  const std::vector<TokenId>& content_tokens() const { return content_; }

  // Canonical note for `values[slot]` restricted to one section.
  TokenSeq render_note(std::span<const std::size_t> values, std::size_t section) const;

 private:
  TaskSpec spec_;
  Vocab vocab_;
  TokenId first_slot_ = 0, first_value_ = 0, first_filler_ = 0, first_section_ = 0;
  std::vector<TokenId> content_;
};

struct DialogueCase {
  std::string case_id;
  Split split = Split::kSft;
  std::size_t section = 0;
  TokenSeq dialogue;
  TokenSeq gold_note;  // EOS-terminated
};

struct Corpus {
  std::vector<DialogueCase> cases;
  std::vector<TokenSeq> pretrain_docs;  // note bodies without EOS
};

Corpus generate_corpus(const TaskSpec& spec);

// Policy input for a case: BOS dialogue SEP [section tag].
TokenSeq make_prompt(const TaskLayout& layout, const DialogueCase& c);

std::vector<const DialogueCase*> cases_in(const Corpus& corpus, Split split);

enum class TeacherMode { kExact, kNoisy };

struct TeacherOracle {
  TeacherMode mode = TeacherMode::kExact;
  double epsilon = 0.0;
  std::uint64_t seed = 0;
};

// Parses the (tag, value) mentions out of a dialogue and writes the canonical
// note for `section`. Noisy mode then substitutes each non-EOS token with
// probability epsilon, drawing from a stream keyed by `draw_id`. Throws
// InputError on malformed dialogues (missing, duplicated or dangling slots).
TokenSeq teacher_note(const TeacherOracle& oracle, const TaskLayout& layout,
                      std::span<const TokenId> dialogue, std::size_t section,
                      std::uint64_t draw_id);

// Replaces each non-EOS token, with probability epsilon, by a different
// token drawn uniformly from `alphabet`.
TokenSeq corrupt_tokens(std::span<const TokenId> tokens, double epsilon,
                        std::span<const TokenId> alphabet, Rng& rng);

// Levenshtein distance over token sequences.
std::size_t edit_distance(std::span<const TokenId> a, std::span<const TokenId> b);

// (most, least) preferred: min / max edit distance to `gold`, lower index on
// ties, and least always differs from most.
std::pair<std::size_t, std::size_t> simulated_preference(std::span<const TokenSeq> candidates,
                                                         std::span<const TokenId> gold);

}  // namespace notecraft
