// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/synthtask.hpp"

#include <algorithm>
#include <array>
#include <optional>

#include <fmt/format.h>

#include "notecraft/errors.hpp"

namespace notecraft {

namespace {

constexpr std::array<const char*, 10> kSlotNames = {"age", "bp",  "dx",   "med", "plan",
                                                    "hr",  "tmp", "wt", "alg", "hx"};
constexpr std::array<const char*, 10> kFillerNames = {"um",  "uh",    "okay", "so",   "well",
                                                      "right", "yeah", "hmm", "like", "see"};

std::string slot_name(std::size_t i) {
  return i < kSlotNames.size() ? kSlotNames[i] : fmt::format("slot{}", i);
}

std::string filler_name(std::size_t i) {
  return i < kFillerNames.size() ? kFillerNames[i] : fmt::format("fill{}", i);
}

std::size_t task_vocab_size(const TaskSpec& s) {
  return Vocab::kNumSpecial + s.n_slots + s.n_slots * s.values_per_slot + s.n_filler +
         (s.note_sections > 1 ? s.note_sections : 0);
}

}  // namespace

const char* split_name(Split split) {
  switch (split) {
    case Split::kSft: return "sft";
    case Split::kRlaif: return "rlaif";
    case Split::kRlhf: return "rlhf";
    case Split::kValidation: return "validation";
  }
  return "?";
}

Split parse_split(const std::string& name) {
  for (auto s : {Split::kSft, Split::kRlaif, Split::kRlhf, Split::kValidation}) {
    if (name == split_name(s)) return s;
  }
  throw InputError(fmt::format("unknown split '{}'", name));
}

void TaskSpec::validate() const {
  if (n_slots == 0 || values_per_slot == 0) {
    throw ConfigError("task: n_slots and values_per_slot must be positive");
  }
  if (!(filler_rate >= 0.0 && filler_rate < 1.0)) {
    throw ConfigError("task: filler_rate must lie in [0, 1)");
  }
  if (filler_rate > 0.0 && n_filler == 0) throw ConfigError("task: filler_rate needs n_filler > 0");
  if (note_sections != 1 && note_sections != 2) throw ConfigError("task: note_sections is 1 or 2");
  if (note_sections == 2 && n_slots < 2) throw ConfigError("task: two sections need >= 2 slots");
  if (task_vocab_size(*this) > vocab_limit) {
    throw ConfigError(fmt::format("task: vocabulary of {} tokens overflows the limit {}",
                                  task_vocab_size(*this), vocab_limit));
  }
}

TaskLayout::TaskLayout(const TaskSpec& spec) : spec_(spec) {
  spec.validate();
  std::vector<std::string> symbols;
  for (std::size_t i = 0; i < spec.n_slots; ++i) symbols.push_back(slot_name(i));
  for (std::size_t i = 0; i < spec.n_slots; ++i)
    for (std::size_t j = 0; j < spec.values_per_slot; ++j)
      symbols.push_back(fmt::format("{}_{}", slot_name(i), j + 1));
  for (std::size_t i = 0; i < spec.n_filler; ++i) symbols.push_back(filler_name(i));
  if (spec.note_sections > 1) {
    for (std::size_t s = 0; s < spec.note_sections; ++s)
      symbols.push_back(fmt::format("<section{}>", s + 1));
  }
  vocab_ = Vocab(symbols);
  first_slot_ = static_cast<TokenId>(Vocab::kNumSpecial);
  first_value_ = first_slot_ + static_cast<TokenId>(spec.n_slots);
  first_filler_ = first_value_ + static_cast<TokenId>(spec.n_slots * spec.values_per_slot);
  first_section_ = first_filler_ + static_cast<TokenId>(spec.n_filler);
  for (TokenId t = first_slot_; t < first_section_; ++t) content_.push_back(t);
}

TokenId TaskLayout::slot_token(std::size_t slot) const {
  return first_slot_ + static_cast<TokenId>(slot);
}

TokenId TaskLayout::value_token(std::size_t slot, std::size_t value) const {
  return first_value_ + static_cast<TokenId>(slot * spec_.values_per_slot + value);
}

TokenId TaskLayout::filler_token(std::size_t index) const {
  return first_filler_ + static_cast<TokenId>(index);
}

TokenId TaskLayout::section_token(std::size_t section) const {
  return first_section_ + static_cast<TokenId>(section);
}

bool TaskLayout::is_slot(TokenId t) const { return t >= first_slot_ && t < first_value_; }
bool TaskLayout::is_value(TokenId t) const { return t >= first_value_ && t < first_filler_; }
bool TaskLayout::is_filler(TokenId t) const { return t >= first_filler_ && t < first_section_; }

std::size_t TaskLayout::slot_of(TokenId t) const {
  if (is_slot(t)) return static_cast<std::size_t>(t - first_slot_);
  if (is_value(t)) return static_cast<std::size_t>(t - first_value_) / spec_.values_per_slot;
  throw InputError(fmt::format("token {} is neither a slot tag nor a value", t));
}

std::size_t TaskLayout::value_index(TokenId value) const {
  if (!is_value(value)) throw InputError(fmt::format("token {} is not a value", value));
  return static_cast<std::size_t>(value - first_value_) % spec_.values_per_slot;
}

std::vector<std::size_t> TaskLayout::section_slots(std::size_t section) const {
  std::vector<std::size_t> out;
  if (spec_.note_sections == 1) {
    for (std::size_t i = 0; i < spec_.n_slots; ++i) out.push_back(i);
    return out;
  }
  const std::size_t split = (spec_.n_slots + 1) / 2;
  const std::size_t lo = section == 0 ? 0 : split;
  const std::size_t hi = section == 0 ? split : spec_.n_slots;
  for (std::size_t i = lo; i < hi; ++i) out.push_back(i);
  return out;
}

TokenSeq TaskLayout::render_note(std::span<const std::size_t> values, std::size_t section) const {
  TokenSeq note;
  bool first = true;
  for (auto slot : section_slots(section)) {
    if (!first) note.push_back(Vocab::kNewline);
    note.push_back(slot_token(slot));
    note.push_back(value_token(slot, values[slot]));
    first = false;
  }
  note.push_back(Vocab::kEos);
  return note;
}

Corpus generate_corpus(const TaskSpec& spec) {
  const TaskLayout layout(spec);
  Corpus corpus;
  const auto& sizes = spec.splits;
  const std::array<std::pair<Split, std::size_t>, 4> plan = {{{Split::kSft, sizes.sft},
                                                              {Split::kRlaif, sizes.rlaif},
                                                              {Split::kRlhf, sizes.rlhf},
                                                              {Split::kValidation, sizes.validation}}};
  std::size_t index = 0;
  for (const auto& [split, count] : plan) {
    for (std::size_t n = 0; n < count; ++n, ++index) {
      Rng rng(derive_seed(spec.seed, {0xca5e, index}));
      std::vector<std::size_t> values(spec.n_slots);
      for (auto& v : values) v = rng.below(spec.values_per_slot);
      std::vector<std::size_t> order(spec.n_slots);
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      rng.shuffle(std::span<std::size_t>(order));

      TokenSeq dialogue;
      auto sprinkle = [&] {
        for (int k = 0; k < 3 && rng.bernoulli(spec.filler_rate); ++k) {
          dialogue.push_back(layout.filler_token(rng.below(spec.n_filler)));
        }
      };
      for (auto slot : order) {
        sprinkle();
        dialogue.push_back(layout.slot_token(slot));
        dialogue.push_back(layout.value_token(slot, values[slot]));
      }
      sprinkle();

      for (std::size_t section = 0; section < spec.note_sections; ++section) {
        DialogueCase c;
        c.case_id = spec.note_sections == 1 ? fmt::format("case-{:05d}", index)
                                            : fmt::format("case-{:05d}-s{}", index, section + 1);
        c.split = split;
        c.section = section;
        c.dialogue = dialogue;
        c.gold_note = layout.render_note(values, section);
        corpus.cases.push_back(std::move(c));
      }
    }
  }

  for (std::size_t n = 0; n < sizes.pretrain_docs; ++n) {
    Rng rng(derive_seed(spec.seed, {0xd0c, n}));
    std::vector<std::size_t> values(spec.n_slots);
    for (auto& v : values) v = rng.below(spec.values_per_slot);
    const std::size_t section = rng.below(spec.note_sections);
    TokenSeq doc;
    if (spec.note_sections > 1) doc.push_back(layout.section_token(section));
    auto note = layout.render_note(values, section);
    doc.insert(doc.end(), note.begin(), note.end() - 1);
    corpus.pretrain_docs.push_back(std::move(doc));
  }
  return corpus;
}

TokenSeq make_prompt(const TaskLayout& layout, const DialogueCase& c) {
  TokenSeq prompt;
  prompt.reserve(c.dialogue.size() + 3);
  prompt.push_back(Vocab::kBos);
  prompt.insert(prompt.end(), c.dialogue.begin(), c.dialogue.end());
  prompt.push_back(Vocab::kSep);
  if (layout.spec().note_sections > 1) prompt.push_back(layout.section_token(c.section));
  return prompt;
}

std::vector<const DialogueCase*> cases_in(const Corpus& corpus, Split split) {
  std::vector<const DialogueCase*> out;
  for (const auto& c : corpus.cases) {
    if (c.split == split) out.push_back(&c);
  }
  return out;
}

TokenSeq corrupt_tokens(std::span<const TokenId> tokens, double epsilon,
                        std::span<const TokenId> alphabet, Rng& rng) {
  if (alphabet.size() < 2) throw ContractError("corrupt: alphabet needs two or more tokens");
  TokenSeq out(tokens.begin(), tokens.end());
  for (auto& t : out) {
    if (t == Vocab::kEos || !rng.bernoulli(epsilon)) continue;
    TokenId replacement;
    do {
      replacement = alphabet[rng.below(alphabet.size())];
    } while (replacement == t);
    t = replacement;
  }
  return out;
}

TokenSeq teacher_note(const TeacherOracle& oracle, const TaskLayout& layout,
                      std::span<const TokenId> dialogue, std::size_t section,
                      std::uint64_t draw_id) {
  const auto& spec = layout.spec();
  if (section >= spec.note_sections) throw InputError("teacher: section out of range");
  std::vector<std::optional<std::size_t>> values(spec.n_slots);
  for (std::size_t i = 0; i < dialogue.size(); ++i) {
    const TokenId t = dialogue[i];
    if (layout.is_filler(t)) continue;
    if (!layout.is_slot(t)) {
      throw InputError(fmt::format("teacher: unexpected token {} at position {}", t, i));
    }
    const std::size_t slot = layout.slot_of(t);
    if (i + 1 >= dialogue.size() || !layout.is_value(dialogue[i + 1]) ||
        layout.slot_of(dialogue[i + 1]) != slot) {
      throw InputError(fmt::format("teacher: slot tag at position {} has no value", i));
    }
    if (values[slot]) throw InputError(fmt::format("teacher: slot {} mentioned twice", slot));
    values[slot] = layout.value_index(dialogue[++i]);
  }
  std::vector<std::size_t> resolved(spec.n_slots, 0);
  for (auto slot : layout.section_slots(section)) {
    if (!values[slot]) throw InputError(fmt::format("teacher: slot {} never mentioned", slot));
    resolved[slot] = *values[slot];
  }
  TokenSeq note = layout.render_note(resolved, section);
  if (oracle.mode == TeacherMode::kNoisy && oracle.epsilon > 0.0) {
    Rng rng(derive_seed(oracle.seed, {0x7eac, draw_id}));
    note = corrupt_tokens(note, oracle.epsilon, layout.content_tokens(), rng);
  }
  return note;
}

std::size_t edit_distance(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::pair<std::size_t, std::size_t> simulated_preference(std::span<const TokenSeq> candidates,
                                                         std::span<const TokenId> gold) {
  if (candidates.size() < 2) throw ContractError("preference: need at least two candidates");
  std::vector<std::size_t> dist;
  for (const auto& c : candidates) dist.push_back(edit_distance(c, gold));
  std::size_t most = 0;
  for (std::size_t i = 1; i < dist.size(); ++i) {
    if (dist[i] < dist[most]) most = i;
  }
  std::optional<std::size_t> least;
  for (std::size_t i = 0; i < dist.size(); ++i) {
    if (i == most) continue;
    if (!least || dist[i] > dist[*least]) least = i;
  }
  return {most, *least};
}

}  // namespace notecraft
