// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/serialize.hpp"

#include <fmt/format.h>

#include "notecraft/errors.hpp"

namespace notecraft {

using nlohmann::json;

namespace {

template <typename T>
void read(const json& j, const char* key, T& field) {
  if (auto it = j.find(key); it != j.end()) it->get_to(field);
}

const char* stage_name(Stage s) { return s == Stage::kPretrain ? "pretrain" : "sft"; }
const char* batching_name(Batching b) { return b == Batching::kPacking ? "packing" : "padding"; }

}  // namespace

void to_json(json& j, const DecodeConfig& v) {
  j = json{{"temperature", v.temperature},
           {"top_k", v.top_k},
           {"top_p", v.top_p},
           {"repetition_penalty", v.repetition_penalty},
           {"max_new_tokens", v.max_new_tokens},
           {"seed", v.seed},
           {"sample", v.sample}};
}

void from_json(const json& j, DecodeConfig& v) {
  read(j, "temperature", v.temperature);
  read(j, "top_k", v.top_k);
  read(j, "top_p", v.top_p);
  read(j, "repetition_penalty", v.repetition_penalty);
  read(j, "max_new_tokens", v.max_new_tokens);
  read(j, "seed", v.seed);
  read(j, "sample", v.sample);
}

void to_json(json& j, const SplitSizes& v) {
  j = json{{"pretrain_docs", v.pretrain_docs},
           {"sft", v.sft},
           {"rlaif", v.rlaif},
           {"rlhf", v.rlhf},
           {"validation", v.validation}};
}

void from_json(const json& j, SplitSizes& v) {
  read(j, "pretrain_docs", v.pretrain_docs);
  read(j, "sft", v.sft);
  read(j, "rlaif", v.rlaif);
  read(j, "rlhf", v.rlhf);
  read(j, "validation", v.validation);
}

void to_json(json& j, const TaskSpec& v) {
  j = json{{"n_slots", v.n_slots},
           {"values_per_slot", v.values_per_slot},
           {"n_filler", v.n_filler},
           {"filler_rate", v.filler_rate},
           {"note_sections", v.note_sections},
           {"vocab_limit", v.vocab_limit},
           {"seed", v.seed},
           {"splits", v.splits}};
}

void from_json(const json& j, TaskSpec& v) {
  read(j, "n_slots", v.n_slots);
  read(j, "values_per_slot", v.values_per_slot);
  read(j, "n_filler", v.n_filler);
  read(j, "filler_rate", v.filler_rate);
  read(j, "note_sections", v.note_sections);
  read(j, "vocab_limit", v.vocab_limit);
  read(j, "seed", v.seed);
  read(j, "splits", v.splits);
}

void to_json(json& j, const TinyLmDims& v) {
  j = json{{"vocab", v.vocab}, {"context", v.context}, {"embed", v.embed}, {"hidden", v.hidden}};
}

void from_json(const json& j, TinyLmDims& v) {
  read(j, "vocab", v.vocab);
  read(j, "context", v.context);
  read(j, "embed", v.embed);
  read(j, "hidden", v.hidden);
}

void to_json(json& j, const LoraConfig& v) {
  json targets = json::array();
  for (auto t : v.targets) targets.push_back(t == LoraTarget::kW1 ? "w1" : "w2");
  j = json{{"rank", v.rank}, {"alpha", v.alpha}, {"dropout", v.dropout}, {"targets", targets}};
}

void from_json(const json& j, LoraConfig& v) {
  read(j, "rank", v.rank);
  read(j, "alpha", v.alpha);
  read(j, "dropout", v.dropout);
  if (auto it = j.find("targets"); it != j.end()) {
    v.targets.clear();
    for (const auto& t : *it) {
      const auto s = t.get<std::string>();
      if (s == "w1") v.targets.push_back(LoraTarget::kW1);
      else if (s == "w2") v.targets.push_back(LoraTarget::kW2);
      else throw ConfigError(fmt::format("lora: unknown target '{}'", s));
    }
  }
}

void to_json(json& j, const TrainRunConfig& v) {
  j = json{{"stage", stage_name(v.stage)},
           {"batching", batching_name(v.batching)},
           {"context_length", v.context_length},
           {"batch_size", v.batch_size},
           {"grad_accum_steps", v.grad_accum_steps},
           {"epochs", v.epochs},
           {"peak_lr", v.peak_lr},
           {"warmup_steps", v.warmup_steps},
           {"total_steps", v.total_steps},
           {"seed", v.seed},
           {"prompt_mask", v.prompt_mask},
           {"max_prompt_tokens", v.max_prompt_tokens},
           {"max_response_tokens", v.max_response_tokens},
           {"weight_decay", v.weight_decay},
           {"ema_window", v.ema_window},
           {"spike_threshold", v.spike_threshold},
           {"spike_window", v.spike_window}};
}

void from_json(const json& j, TrainRunConfig& v) {
  if (auto it = j.find("stage"); it != j.end()) {
    const auto s = it->get<std::string>();
    if (s == "pretrain") v.stage = Stage::kPretrain;
    else if (s == "sft") v.stage = Stage::kSft;
    else throw ConfigError(fmt::format("train: unknown stage '{}'", s));
  }
  if (auto it = j.find("batching"); it != j.end()) {
    const auto s = it->get<std::string>();
    if (s == "packing") v.batching = Batching::kPacking;
    else if (s == "padding") v.batching = Batching::kPadding;
    else throw ConfigError(fmt::format("train: unknown batching '{}'", s));
  }
  read(j, "context_length", v.context_length);
  read(j, "batch_size", v.batch_size);
  read(j, "grad_accum_steps", v.grad_accum_steps);
  read(j, "epochs", v.epochs);
  read(j, "peak_lr", v.peak_lr);
  read(j, "warmup_steps", v.warmup_steps);
  read(j, "total_steps", v.total_steps);
  read(j, "seed", v.seed);
  read(j, "prompt_mask", v.prompt_mask);
  read(j, "max_prompt_tokens", v.max_prompt_tokens);
  read(j, "max_response_tokens", v.max_response_tokens);
  read(j, "weight_decay", v.weight_decay);
  read(j, "ema_window", v.ema_window);
  read(j, "spike_threshold", v.spike_threshold);
  read(j, "spike_window", v.spike_window);
}

void to_json(json& j, const DpoConfig& v) {
  j = json{{"beta", v.beta},
           {"lr", v.lr},
           {"epochs_per_round", v.epochs_per_round},
           {"grad_accum", v.grad_accum},
           {"warmup_steps", v.warmup_steps},
           {"seed", v.seed}};
}

void from_json(const json& j, DpoConfig& v) {
  read(j, "beta", v.beta);
  read(j, "lr", v.lr);
  read(j, "epochs_per_round", v.epochs_per_round);
  read(j, "grad_accum", v.grad_accum);
  read(j, "warmup_steps", v.warmup_steps);
  read(j, "seed", v.seed);
}

void to_json(json& j, const TeacherOracle& v) {
  j = json{{"mode", v.mode == TeacherMode::kExact ? "exact" : "noisy"},
           {"epsilon", v.epsilon},
           {"seed", v.seed}};
}

void from_json(const json& j, TeacherOracle& v) {
  if (auto it = j.find("mode"); it != j.end()) {
    const auto s = it->get<std::string>();
    if (s == "exact") v.mode = TeacherMode::kExact;
    else if (s == "noisy") v.mode = TeacherMode::kNoisy;
    else throw ConfigError(fmt::format("teacher: unknown mode '{}'", s));
  }
  read(j, "epsilon", v.epsilon);
  read(j, "seed", v.seed);
}

void to_json(json& j, const PreferenceRecord& v) {
  const char* source = "teacher";
  switch (v.source) {
    case RecordSource::kTeacher: source = "teacher"; break;
    case RecordSource::kPolicyRound: source = "policy-round"; break;
    case RecordSource::kHuman: source = "human"; break;
    case RecordSource::kSimulatedHuman: source = "simulated-human"; break;
  }
  j = json{{"case_id", v.case_id},   {"round", v.round},         {"source", source},
           {"edited", v.edited},     {"decode_seed", v.decode_seed}, {"prompt", v.prompt},
           {"preferred", v.preferred}, {"rejected", v.rejected}};
}

void from_json(const json& j, PreferenceRecord& v) {
  read(j, "case_id", v.case_id);
  read(j, "round", v.round);
  read(j, "edited", v.edited);
  read(j, "decode_seed", v.decode_seed);
  read(j, "prompt", v.prompt);
  read(j, "preferred", v.preferred);
  read(j, "rejected", v.rejected);
  const auto source = j.value("source", std::string("teacher"));
  if (source == "teacher") v.source = RecordSource::kTeacher;
  else if (source == "policy-round") v.source = RecordSource::kPolicyRound;
  else if (source == "human") v.source = RecordSource::kHuman;
  else if (source == "simulated-human") v.source = RecordSource::kSimulatedHuman;
  else throw FormatError(fmt::format("record: unknown source '{}'", source));
}

json case_to_json(const DialogueCase& c, const Vocab& vocab) {
  return json{{"case_id", c.case_id},
              {"split", split_name(c.split)},
              {"section", c.section},
              {"dialogue", c.dialogue},
              {"gold_note", c.gold_note},
              {"dialogue_text", vocab.render(c.dialogue)},
              {"note_text", vocab.render(c.gold_note)}};
}

DialogueCase case_from_json(const json& j) {
  DialogueCase c;
  c.case_id = j.at("case_id").get<std::string>();
  c.split = parse_split(j.at("split").get<std::string>());
  c.section = j.value("section", std::size_t{0});
  c.dialogue = j.at("dialogue").get<TokenSeq>();
  c.gold_note = j.at("gold_note").get<TokenSeq>();
  return c;
}

}  // namespace notecraft
