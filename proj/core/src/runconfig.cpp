// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/runconfig.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "notecraft/errors.hpp"
#include "notecraft/rng.hpp"
#include "notecraft/serialize.hpp"

namespace notecraft {

using nlohmann::json;

RunConfig::RunConfig() {
  pretrain.stage = Stage::kPretrain;
  pretrain.batching = Batching::kPacking;
  pretrain.prompt_mask = false;
  pretrain.context_length = 64;
  pretrain.peak_lr = 3e-3;
  pretrain.warmup_steps = 10;
  pretrain.ema_window = 25;
  pretrain.spike_window = 20;

  sft.peak_lr = 3e-3;
  sft.epochs = 5;
  sft.ema_window = 25;
  sft.spike_window = 20;

  rlaif.rejected_decode.max_new_tokens = 32;
  rlaif.dpo.lr = 2e-3;

  rlhf.candidate_decode.max_new_tokens = 32;
  rlhf.dpo.lr = 2e-3;
  rlhf.dpo.epochs_per_round = 3;

  eval.decode.max_new_tokens = 32;
}

RunConfig RunConfig::resolved() const {
  RunConfig r = *this;
  r.task.seed = derive_seed(seed, {1});
  r.task.vocab_limit = model.vocab;
  r.pretrain.seed = derive_seed(seed, {3});
  r.sft.seed = derive_seed(seed, {4});
  r.rlaif.dpo.seed = derive_seed(seed, {5});
  r.rlaif.rejected_decode.seed = derive_seed(seed, {6});
  r.rlhf.dpo.seed = derive_seed(seed, {7});
  r.rlhf.candidate_decode.seed = derive_seed(seed, {8});
  r.eval.decode.seed = derive_seed(seed, {9});
  r.teacher.seed = derive_seed(seed, {10});
  return r;
}

void RunConfig::validate() const {
  if (out_dir.empty()) throw ConfigError("config: out_dir is empty");
  task.validate();
  if (pretrain.stage != Stage::kPretrain) throw ConfigError("config: pretrain.stage must be pretrain");
  if (sft.stage != Stage::kSft) throw ConfigError("config: sft.stage must be sft");
  pretrain.validate();
  sft.validate();
  if (rlhf.labels != "simulated" && rlhf.labels != "human") {
    throw ConfigError(fmt::format("config: rlhf.labels must be simulated or human, got '{}'", rlhf.labels));
  }
  if (eval.temperatures.empty()) throw ConfigError("config: eval.temperatures is empty");
  for (double t : eval.temperatures) {
    if (!(t > 0.0)) throw ConfigError("config: eval temperatures must be > 0");
  }
  eval.decode.validate();
  rlaif_plan(*this, RoundMode::kDistillDirect).validate();
  rlhf_plan(*this).validate();
  if (teacher.epsilon < 0.0 || teacher.epsilon > 1.0) {
    throw ConfigError("config: teacher.epsilon must be in [0, 1]");
  }
}

namespace {

template <typename T>
void read(const json& j, const char* key, T& field) {
  if (auto it = j.find(key); it != j.end()) it->get_to(field);
}

// Rejects keys the defaults do not have, so typos fail loudly.
void check_known_keys(const json& defaults, const json& doc, const std::string& path) {
  if (!doc.is_object() || !defaults.is_object()) return;
  for (const auto& [key, value] : doc.items()) {
    const auto it = defaults.find(key);
    const std::string where = path.empty() ? key : path + "." + key;
    if (it == defaults.end()) throw ConfigError(fmt::format("config: unknown key '{}'", where));
    check_known_keys(*it, value, where);
  }
}

}  // namespace

void to_json(json& j, const RunConfig& v) {
  j = json{{"out_dir", v.out_dir},
           {"seed", v.seed},
           {"task", v.task},
           {"model", v.model},
           {"teacher", v.teacher},
           {"pretrain", v.pretrain},
           {"sft", v.sft},
           {"lora_enabled", v.lora_enabled},
           {"lora", v.lora},
           {"rlaif",
            {{"n_rounds", v.rlaif.n_rounds},
             {"samples_per_prompt", v.rlaif.samples_per_prompt},
             {"rejected_decode", v.rlaif.rejected_decode},
             {"dpo", v.rlaif.dpo}}},
           {"rlhf",
            {{"n_rounds", v.rlhf.n_rounds},
             {"candidate_temperatures", v.rlhf.candidate_temperatures},
             {"candidate_decode", v.rlhf.candidate_decode},
             {"dpo", v.rlhf.dpo},
             {"labels", v.rlhf.labels},
             {"from", v.rlhf.from},
             {"wait_seconds", v.rlhf.wait_seconds}}},
           {"eval", {{"temperatures", v.eval.temperatures}, {"decode", v.eval.decode}}},
           {"label_server", {{"host", v.label_server.host}, {"port", v.label_server.port}}},
           {"cost",
            {{"n_input_tokens", v.cost.workload.n_input_tokens},
             {"n_output_tokens", v.cost.workload.n_output_tokens},
             {"annual_requests", v.cost.workload.annual_requests},
             {"pricing", v.cost.pricing}}}};
}

void from_json(const json& j, RunConfig& v) {
  read(j, "out_dir", v.out_dir);
  read(j, "seed", v.seed);
  read(j, "task", v.task);
  read(j, "model", v.model);
  read(j, "teacher", v.teacher);
  read(j, "pretrain", v.pretrain);
  read(j, "sft", v.sft);
  read(j, "lora_enabled", v.lora_enabled);
  read(j, "lora", v.lora);
  if (auto it = j.find("rlaif"); it != j.end()) {
    read(*it, "n_rounds", v.rlaif.n_rounds);
    read(*it, "samples_per_prompt", v.rlaif.samples_per_prompt);
    read(*it, "rejected_decode", v.rlaif.rejected_decode);
    read(*it, "dpo", v.rlaif.dpo);
  }
  if (auto it = j.find("rlhf"); it != j.end()) {
    read(*it, "n_rounds", v.rlhf.n_rounds);
    read(*it, "candidate_temperatures", v.rlhf.candidate_temperatures);
    read(*it, "candidate_decode", v.rlhf.candidate_decode);
    read(*it, "dpo", v.rlhf.dpo);
    read(*it, "labels", v.rlhf.labels);
    read(*it, "from", v.rlhf.from);
    read(*it, "wait_seconds", v.rlhf.wait_seconds);
  }
  if (auto it = j.find("eval"); it != j.end()) {
    read(*it, "temperatures", v.eval.temperatures);
    read(*it, "decode", v.eval.decode);
  }
  if (auto it = j.find("label_server"); it != j.end()) {
    read(*it, "host", v.label_server.host);
    read(*it, "port", v.label_server.port);
  }
  if (auto it = j.find("cost"); it != j.end()) {
    read(*it, "n_input_tokens", v.cost.workload.n_input_tokens);
    read(*it, "n_output_tokens", v.cost.workload.n_output_tokens);
    read(*it, "annual_requests", v.cost.workload.annual_requests);
    read(*it, "pricing", v.cost.pricing);
  }
}

void apply_override(json& doc, std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos || eq == 0) {
    throw ConfigError(fmt::format("override '{}' must look like key.path=value", assignment));
  }
  const std::string path(assignment.substr(0, eq));
  const std::string text(assignment.substr(eq + 1));
  json value;
  try {
    value = json::parse(text);
  } catch (const json::exception&) {
    value = text;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (key.empty()) throw ConfigError(fmt::format("override '{}' has an empty key", path));
    if (!node->is_object()) throw ConfigError(fmt::format("override '{}': '{}' is not a section", path, key));
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

RunConfig load_run_config(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides) {
  const json defaults = RunConfig{};
  json doc = defaults;
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw NotFoundError(fmt::format("config file {} not found", file.string()));
    json user;
    try {
      user = json::parse(in);
    } catch (const json::exception& e) {
      throw ConfigError(fmt::format("{}: {}", file.string(), e.what()));
    }
    check_known_keys(defaults, user, "");
    doc.merge_patch(user);
  }
  for (const auto& o : overrides) apply_override(doc, o);
  check_known_keys(defaults, doc, "");
  RunConfig cfg;
  try {
    cfg = doc.get<RunConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(fmt::format("config: {}", e.what()));
  }
  cfg.validate();
  return cfg;
}

std::string canonical_json(const json& j) { return j.dump(2) + "\n"; }

std::string git_blob_sha1(std::string_view content) {
  const std::string header = fmt::format("blob {}", content.size());
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw Error("crypto", "cannot allocate digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size() + 1) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("crypto", "SHA-1 digest failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

std::string git_blob_sha1_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError(fmt::format("cannot read {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return git_blob_sha1(buf.str());
}

RoundPlan rlaif_plan(const RunConfig& cfg, RoundMode mode) {
  RoundPlan plan;
  plan.mode = mode;
  plan.n_rounds = cfg.rlaif.n_rounds;
  plan.samples_per_prompt = cfg.rlaif.samples_per_prompt;
  plan.rejected_decode = cfg.rlaif.rejected_decode;
  plan.dpo = cfg.rlaif.dpo;
  return plan;
}

RoundPlan rlhf_plan(const RunConfig& cfg) {
  RoundPlan plan;
  plan.mode = cfg.rlhf.labels == "human" ? RoundMode::kRlhf : RoundMode::kSimulatedRlhf;
  plan.n_rounds = cfg.rlhf.n_rounds;
  plan.rejected_decode = cfg.rlhf.candidate_decode;
  plan.candidate_temperatures = cfg.rlhf.candidate_temperatures;
  plan.dpo = cfg.rlhf.dpo;
  return plan;
}

}  // namespace notecraft
