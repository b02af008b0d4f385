// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

// JSON encodings for configuration and record types. Every from_json fills
// missing keys with the type's defaults.

#pragma once

#include <nlohmann/json.hpp>

#include "notecraft/generation.hpp"
#include "notecraft/policy.hpp"
#include "notecraft/preference.hpp"
#include "notecraft/synthtask.hpp"
#include "notecraft/training.hpp"

namespace notecraft {

void to_json(nlohmann::json& j, const DecodeConfig& v);
void from_json(const nlohmann::json& j, DecodeConfig& v);

void to_json(nlohmann::json& j, const SplitSizes& v);
void from_json(const nlohmann::json& j, SplitSizes& v);

void to_json(nlohmann::json& j, const TaskSpec& v);
void from_json(const nlohmann::json& j, TaskSpec& v);

void to_json(nlohmann::json& j, const TinyLmDims& v);
void from_json(const nlohmann::json& j, TinyLmDims& v);

void to_json(nlohmann::json& j, const LoraConfig& v);
void from_json(const nlohmann::json& j, LoraConfig& v);

void to_json(nlohmann::json& j, const TrainRunConfig& v);
void from_json(const nlohmann::json& j, TrainRunConfig& v);

void to_json(nlohmann::json& j, const DpoConfig& v);
void from_json(const nlohmann::json& j, DpoConfig& v);

void to_json(nlohmann::json& j, const TeacherOracle& v);
void from_json(const nlohmann::json& j, TeacherOracle& v);

void to_json(nlohmann::json& j, const PreferenceRecord& v);
void from_json(const nlohmann::json& j, PreferenceRecord& v);

// Dataset line: case_id, split, section, dialogue, gold_note (token ids) plus
// the rendered dialogue_text / note_text for display.
nlohmann::json case_to_json(const DialogueCase& c, const Vocab& vocab);
DialogueCase case_from_json(const nlohmann::json& j);

}  // namespace notecraft
