// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/stages.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>

#include <fmt/format.h>

#include "notecraft/checkpoint.hpp"
#include "notecraft/costmodel.hpp"
#include "notecraft/errors.hpp"
#include "notecraft/evalsuite.hpp"
#include "notecraft/plot.hpp"
#include "notecraft/rng.hpp"
#include "notecraft/serialize.hpp"
#include "notecraft/training.hpp"

namespace notecraft {

namespace fs = std::filesystem;
using json = nlohmann::json;

const char* stage_status_name(StageStatus status) {
  switch (status) {
    case StageStatus::kRan: return "ran";
    case StageStatus::kCached: return "cached";
    case StageStatus::kAwaitingLabels: return "awaiting_labels";
  }
  return "?";
}

json StageResult::to_json() const {
  json j{{"stage", stage}, {"status", stage_status_name(status)}, {"input_hash", input_hash}};
  if (!message.empty()) j["message"] = message;
  return j;
}

std::string rlaif_stage_name(RoundMode mode) {
  if (mode != RoundMode::kDistillDirect && mode != RoundMode::kDistilledDpo) {
    throw ConfigError(fmt::format("rlaif: mode must be distill_direct or distilled_dpo, got {}",
                                  round_mode_name(mode)));
  }
  return fmt::format("rlaif_{}", round_mode_name(mode));
}

// ---- run lock ---------------------------------------------------------------

RunLock::RunLock(const fs::path& out_dir) : path_(out_dir / ".lock") {
  fs::create_directories(out_dir);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid());
      const bool ok = ::write(fd, pid.data(), pid.size()) == static_cast<ssize_t>(pid.size());
      ::close(fd);
      if (!ok) throw Error("io", fmt::format("cannot write {}", path_.string()));
      return;
    }
    if (errno != EEXIST) {
      throw Error("io", fmt::format("cannot create {}: {}", path_.string(), std::strerror(errno)));
    }
    long owner = 0;
    std::ifstream(path_) >> owner;
    if (owner > 0 && (::kill(static_cast<pid_t>(owner), 0) == 0 || errno == EPERM)) {
      throw ConflictError(
          fmt::format("run directory {} is locked by pid {}", out_dir.string(), owner));
    }
    std::error_code ec;
    fs::remove(path_, ec);  // stale lock
  }
  throw ConflictError(fmt::format("cannot lock run directory {}", out_dir.string()));
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---- config -----------------------------------------------------------------

json config_document(const RunConfig& cfg) {
  json j = cfg.resolved();
  j.erase("out_dir");
  return j;
}

std::string config_hash(const RunConfig& cfg) {
  return git_blob_sha1(canonical_json(config_document(cfg)));
}

namespace {

std::uint64_t model_init_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, {2}); }
std::uint64_t sft_lora_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, {11}); }
std::uint64_t rlaif_lora_seed(const RunConfig& cfg, RoundMode mode) {
  return derive_seed(cfg.seed, {12, static_cast<std::uint64_t>(mode)});
}
std::uint64_t rlhf_lora_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, {13}); }
Vocab label_vocab(const Vocab& task_vocab, std::size_t model_vocab) {
  // The policy can emit ids the task never uses; name them so every candidate
  // renders and an edit can reproduce it exactly.
  const auto& all = task_vocab.symbols();
  std::vector<std::string> symbols(all.begin() + Vocab::kNumSpecial, all.end());
  for (std::size_t id = task_vocab.size(); id < model_vocab; ++id) {
    symbols.push_back(fmt::format("<unused{}>", id));
  }
  return Vocab(symbols);
}

std::uint64_t blind_seed(const RunConfig& cfg) { return derive_seed(cfg.seed, {14}); }

void write_json(const fs::path& path, const json& j) { write_text_file(path, canonical_json(j)); }

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError(fmt::format("cannot read {}", path.string()));
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError(fmt::format("cannot read {}", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace

void write_run_config(const RunConfig& cfg) {
  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  const RunConfig r = cfg.resolved();
  const std::string text = canonical_json(config_document(cfg));
  write_text_file(out / "config.json", text);
  write_text_file(out / "config.sha1", git_blob_sha1(text) + "\n");
  write_json(out / "seeds.json", json{{"seed", r.seed},
                                      {"task", r.task.seed},
                                      {"model_init", model_init_seed(r)},
                                      {"pretrain", r.pretrain.seed},
                                      {"sft", r.sft.seed},
                                      {"sft_lora", sft_lora_seed(r)},
                                      {"rlaif_dpo", r.rlaif.dpo.seed},
                                      {"rlaif_decode", r.rlaif.rejected_decode.seed},
                                      {"rlhf_dpo", r.rlhf.dpo.seed},
                                      {"rlhf_decode", r.rlhf.candidate_decode.seed},
                                      {"rlhf_lora", rlhf_lora_seed(r)},
                                      {"eval_decode", r.eval.decode.seed},
                                      {"teacher", r.teacher.seed},
                                      {"label_blinding", blind_seed(r)}});
}

// ---- data files ---------------------------------------------------------------

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  using U = std::make_unsigned_t<T>;
  auto u = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.put(static_cast<char>(u & 0xff));
    u = static_cast<U>(u >> 8);
  }
}

template <typename T>
T get_le(std::istream& in, const fs::path& path) {
  using U = std::make_unsigned_t<T>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = in.get();
    if (c == EOF) throw FormatError(fmt::format("{}: truncated token file", path.string()));
    u = static_cast<U>(u | (static_cast<U>(static_cast<unsigned char>(c)) << (8 * i)));
  }
  return static_cast<T>(u);
}

}  // namespace

void write_dataset(const fs::path& path, const Corpus& corpus, const Vocab& vocab) {
  std::string text;
  for (const auto& c : corpus.cases) text += case_to_json(c, vocab).dump() + "\n";
  write_text_file(path, text);
}

Corpus read_dataset(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError(fmt::format("dataset {} not found", path.string()));
  Corpus corpus;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      corpus.cases.push_back(case_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw FormatError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return corpus;
}

void write_token_file(const fs::path& path, std::span<const TokenId> tokens,
                      std::uint64_t vocab_hash) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io", fmt::format("cannot write {}", path.string()));
  out.write("NCTK", 4);
  put_le<std::uint32_t>(out, 1);
  put_le<std::uint64_t>(out, vocab_hash);
  put_le<std::uint64_t>(out, tokens.size());
  for (TokenId t : tokens) put_le<std::int32_t>(out, t);
  if (!out) throw Error("io", fmt::format("write to {} failed", path.string()));
}

TokenSeq read_token_file(const fs::path& path, std::uint64_t vocab_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError(fmt::format("token file {} not found", path.string()));
  char magic[4];
  if (!in.read(magic, 4) || std::string_view(magic, 4) != "NCTK") {
    throw FormatError(fmt::format("{}: not a token file", path.string()));
  }
  if (const auto version = get_le<std::uint32_t>(in, path); version != 1) {
    throw FormatError(fmt::format("{}: unsupported version {}", path.string(), version));
  }
  if (get_le<std::uint64_t>(in, path) != vocab_hash) {
    throw FormatError(fmt::format("{}: vocabulary hash mismatch", path.string()));
  }
  const auto count = get_le<std::uint64_t>(in, path);
  TokenSeq tokens;
  tokens.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) tokens.push_back(get_le<std::int32_t>(in, path));
  return tokens;
}

// ---- stage machinery ----------------------------------------------------------

namespace {

struct Session {
  RunConfig cfg;  // resolved
  fs::path out;
  TaskLayout layout;

  explicit Session(const RunConfig& raw)
      : cfg(raw.resolved()), out(raw.out_dir), layout(cfg.task) {}

  fs::path dir(const std::string& stage) const { return out / stage; }
};

// Hash over the sorted output file hashes of a completed stage.
std::string fingerprint(const json& manifest) {
  return git_blob_sha1(canonical_json(manifest.at("outputs")));
}

std::optional<json> find_manifest(const Session& s, const std::string& stage) {
  const fs::path path = s.dir(stage) / "stage.json";
  if (!fs::exists(path)) return std::nullopt;
  return read_json(path);
}

json require_manifest(const Session& s, const std::string& stage) {
  auto m = find_manifest(s, stage);
  if (!m) {
    throw DependencyError(
        fmt::format("stage '{}' has not completed in {}; run it first", stage, s.out.string()));
  }
  return *m;
}

struct StageWork {
  std::vector<std::string> outputs;  // paths relative to the stage directory
  json metrics = json::object();
  bool awaiting = false;
  std::string message;
};

bool outputs_match(const fs::path& dir, const json& manifest) {
  for (const auto& [file, hash] : manifest.at("outputs").items()) {
    const fs::path p = dir / file;
    if (!fs::exists(p) || git_blob_sha1_file(p) != hash.get<std::string>()) return false;
  }
  return true;
}

// Runs `body` unless the stage already completed with the same inputs.
// `inputs` holds the stage's own config section; upstream fingerprints are
// added here.
template <typename Body>
StageResult run_stage(const Session& s, const std::string& stage, json inputs,
                      const std::vector<std::string>& upstream, const StageOptions& opts,
                      Body&& body) {
  json up = json::object();
  for (const auto& name : upstream) up[name] = fingerprint(require_manifest(s, name));
  inputs["upstream"] = up;
  inputs["stage"] = stage;
  StageResult result{stage, StageStatus::kRan, git_blob_sha1(canonical_json(inputs)), {}};

  const fs::path dir = s.dir(stage);
  const fs::path manifest_path = dir / "stage.json";
  if (!opts.force) {
    if (auto m = find_manifest(s, stage);
        m && m->value("input_hash", "") == result.input_hash && outputs_match(dir, *m)) {
      result.status = StageStatus::kCached;
      return result;
    }
  }
  fs::create_directories(dir);
  std::error_code ec;
  fs::remove(manifest_path, ec);

  StageWork work = body(dir);
  result.message = work.message;
  if (work.awaiting) {
    result.status = StageStatus::kAwaitingLabels;
    return result;
  }
  json outputs = json::object();
  for (const auto& file : work.outputs) outputs[file] = git_blob_sha1_file(dir / file);
  write_json(manifest_path, json{{"stage", stage},
                                 {"input_hash", result.input_hash},
                                 {"inputs", inputs},
                                 {"outputs", outputs},
                                 {"metrics", work.metrics}});
  return result;
}


void check_vocab(const Session& s) {
  const json v = read_json(s.dir(kGenDataStage) / "vocab.json");
  if (v.at("hash").get<std::string>() != fmt::format("{:016x}", s.layout.vocab().hash())) {
    throw DependencyError("gen-data output does not match the task config; rerun gen-data");
  }
}

Corpus load_corpus(const Session& s) {
  check_vocab(s);
  return read_dataset(s.dir(kGenDataStage) / "dataset.jsonl");
}

Policy load_policy(const fs::path& path) { return load_checkpoint(path).policy; }

fs::path final_checkpoint(const Session& s, const std::string& stage) {
  const json m = require_manifest(s, stage);
  return s.dir(stage) / m.at("metrics").at("final_checkpoint").get<std::string>();
}

std::vector<TrainExample> sft_examples(const Session& s,
                                       std::span<const DialogueCase* const> cases) {
  std::vector<TrainExample> out;
  out.reserve(cases.size());
  for (const auto* c : cases) {
    out.push_back(sft_example(make_prompt(s.layout, *c), c->gold_note, s.cfg.sft.max_prompt_tokens,
                              s.cfg.sft.max_response_tokens));
  }
  return out;
}

json spikes_json(const LossTrace& trace) {
  json out = json::array();
  for (const auto& e : trace.spikes) {
    out.push_back({{"step", trace.steps.at(e.index).step},
                   {"rise", e.rise},
                   {"non_finite", e.non_finite}});
  }
  return out;
}

void write_loss_plot(const fs::path& path, const std::string& title, const LossTrace& trace) {
  Series raw{"raw", {}, {}}, smooth{fmt::format("EMA (window {})", trace.ema_window), {}, {}};
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto x = static_cast<double>(trace.steps[i].step);
    raw.x.push_back(x);
    raw.y.push_back(trace.steps[i].raw_loss);
    smooth.x.push_back(x);
    smooth.y.push_back(i < trace.ema.size() ? trace.ema[i] : trace.steps[i].raw_loss);
  }
  const std::vector<Series> series{raw, smooth};
  write_text_file(path, svg_line_chart(title, "step", "loss", series));
}

// Cross-entropy training with epoch checkpoints. model.ckpt is the latest
// epoch whose steps raised no spike event, or the last epoch when every
// epoch spiked.
StageWork train_ce_stage(const fs::path& dir, const std::string& stage, Policy policy,
                         std::span<const TrainExample> examples, const TrainRunConfig& tcfg,
                         bool merge_adapters) {
  StageWork work;
  std::vector<std::size_t> epoch_end;
  auto on_epoch = [&](std::size_t epoch, const Policy& p, const RngCursor& cursor) {
    const auto name = fmt::format("epoch-{}.ckpt", epoch);
    save_checkpoint(dir / name, Checkpoint{snapshot(p), cursor, fmt::format("{}/epoch{}", stage, epoch)});
    epoch_end.push_back(cursor.step);
    work.outputs.push_back(name);
  };
  const LossTrace trace = train_ce(policy, examples, tcfg, on_epoch);

  std::size_t selected = epoch_end.size();
  bool spike_free = false;
  for (std::size_t e = epoch_end.size(); e >= 1; --e) {
    const std::size_t lo = e >= 2 ? epoch_end[e - 2] : 0, hi = epoch_end[e - 1];
    const bool spiked = std::any_of(trace.spikes.begin(), trace.spikes.end(), [&](const auto& ev) {
      const auto step = trace.steps.at(ev.index).step;
      return step >= lo && step < hi;
    });
    if (!spiked) {
      selected = e;
      spike_free = true;
      break;
    }
  }
  Checkpoint chosen = load_checkpoint(dir / fmt::format("epoch-{}.ckpt", selected));
  if (merge_adapters) chosen.policy = snapshot(merge_lora(thaw(chosen.policy)));
  chosen.stage = stage;
  save_checkpoint(dir / "model.ckpt", chosen);
  write_loss_csv(dir / "loss.csv", trace);
  write_loss_plot(dir / "loss.svg", fmt::format("{} loss", stage), trace);
  work.outputs.insert(work.outputs.end(), {"model.ckpt", "loss.csv", "loss.svg"});

  work.metrics = json{{"steps", trace.steps.size()},
                      {"final_ema", trace.ema.empty() ? 0.0 : trace.ema.back()},
                      {"epoch_mean_loss", trace.epoch_mean_loss},
                      {"spikes", spikes_json(trace)},
                      {"skipped_steps", trace.skipped},
                      {"selected_epoch", selected},
                      {"spike_free", spike_free},
                      {"trainable_parameters", policy.trainable_parameter_count()},
                      {"final_checkpoint", "model.ckpt"}};
  if (!spike_free) work.message = "every epoch contains a loss spike; kept the last epoch";
  return work;
}

Policy with_lora(const Session& s, Policy policy, std::uint64_t seed) {
  if (!s.cfg.lora_enabled) return thaw(policy);
  return attach_lora(policy, s.cfg.lora, seed);
}

json lora_inputs(const Session& s, std::uint64_t seed) {
  if (!s.cfg.lora_enabled) return json{{"enabled", false}};
  return json{{"enabled", true}, {"config", s.cfg.lora}, {"seed", seed}};
}

// Shared artifacts of the preference stages.
void write_round_artifacts(const fs::path& dir, const std::string& title,
                           const PipelineResult& result, StageWork& work) {
  for (std::size_t k = 0; k < result.checkpoints.size(); ++k) {
    const auto name = fmt::format("round-{}.ckpt", k);
    save_checkpoint(dir / name, Checkpoint{result.checkpoints[k], {}, fmt::format("{}/round{}", title, k)});
    work.outputs.push_back(name);
  }
  std::error_code ec;
  fs::remove(dir / "records.jsonl", ec);
  std::vector<PreferenceRecord> all;
  for (const auto& r : result.rounds) all.insert(all.end(), r.records.begin(), r.records.end());
  write_text_file(dir / "records.jsonl", "");
  append_records(dir / "records.jsonl", all);
  work.outputs.push_back("records.jsonl");

  std::string steps_csv = "round,step,loss,accuracy,margin,lr\n";
  std::vector<Series> margin, accuracy;
  json rounds = json::array();
  for (const auto& r : result.rounds) {
    const auto csv = fmt::format("dpo-round-{}.csv", r.round);
    write_dpo_diagnostics_csv(dir / csv, r.dpo.epochs);
    work.outputs.push_back(csv);
    Series m{fmt::format("round {}", r.round), {}, {}}, a{m.name, {}, {}};
    for (const auto& st : r.dpo.steps) {
      steps_csv += fmt::format("{},{},{:.10g},{:.10g},{:.10g},{:.10g}\n", r.round, st.step, st.loss,
                               st.accuracy, st.margin, st.lr);
      m.x.push_back(static_cast<double>(st.step));
      m.y.push_back(st.margin);
      a.x.push_back(static_cast<double>(st.step));
      a.y.push_back(st.accuracy);
    }
    margin.push_back(std::move(m));
    accuracy.push_back(std::move(a));
    json jr{{"round", r.round},
            {"records", r.records.size()},
            {"dropped_degenerate", r.dropped_degenerate},
            {"trained", r.trained}};
    if (r.trained) {
      jr["accuracy_before"] = r.dpo.epochs.front().accuracy;
      jr["accuracy_after"] = r.dpo.epochs.back().accuracy;
      jr["margin_before"] = r.dpo.epochs.front().mean_margin;
      jr["margin_after"] = r.dpo.epochs.back().mean_margin;
      jr["loss_after"] = r.dpo.epochs.back().mean_loss;
      jr["spikes"] = spikes_json(r.dpo.trace);
    }
    rounds.push_back(std::move(jr));
  }
  write_text_file(dir / "dpo-steps.csv", steps_csv);
  write_text_file(dir / "margin.svg",
                  svg_line_chart(fmt::format("{} reward margin", title), "step", "margin", margin));
  write_text_file(dir / "accuracy.svg", svg_line_chart(fmt::format("{} preference accuracy", title),
                                                       "step", "accuracy", accuracy));
  work.outputs.insert(work.outputs.end(), {"dpo-steps.csv", "margin.svg", "accuracy.svg"});
  work.metrics["rounds"] = rounds;
  work.metrics["n_rounds"] = result.rounds.size();
  work.metrics["dropped_degenerate"] = result.dropped_degenerate();
  work.metrics["final_checkpoint"] = fmt::format("round-{}.ckpt", result.checkpoints.size() - 1);
}

// ---- stages -------------------------------------------------------------------

StageResult gen_data_impl(const Session& s, const StageOptions& opts) {
  json inputs{{"task", s.cfg.task}};
  return run_stage(s, kGenDataStage, inputs, {}, opts, [&](const fs::path& dir) {
    StageWork work;
    const Corpus corpus = generate_corpus(s.cfg.task);
    const Vocab& vocab = s.layout.vocab();
    write_dataset(dir / "dataset.jsonl", corpus, vocab);
    const TokenSeq stream = join_documents(corpus.pretrain_docs);
    write_token_file(dir / "pretrain.tok", stream, vocab.hash());
    write_json(dir / "vocab.json",
               json{{"symbols", vocab.symbols()}, {"hash", fmt::format("{:016x}", vocab.hash())}});
    work.outputs = {"dataset.jsonl", "pretrain.tok", "vocab.json"};
    json splits = json::object();
    for (auto split : {Split::kSft, Split::kRlaif, Split::kRlhf, Split::kValidation}) {
      splits[split_name(split)] = cases_in(corpus, split).size();
    }
    work.metrics = json{{"splits", splits},
                        {"pretrain_docs", corpus.pretrain_docs.size()},
                        {"pretrain_tokens", stream.size()},
                        {"vocab_size", vocab.size()}};
    return work;
  });
}

StageResult pretrain_impl(const Session& s, const StageOptions& opts) {
  json inputs{{"model", s.cfg.model}, {"init_seed", model_init_seed(s.cfg)}, {"pretrain", s.cfg.pretrain}};
  return run_stage(s, kPretrainStage, inputs, {kGenDataStage}, opts, [&](const fs::path& dir) {
    check_vocab(s);
    const TokenSeq stream =
        read_token_file(s.dir(kGenDataStage) / "pretrain.tok", s.layout.vocab().hash());
    std::vector<TrainExample> examples;
    for (auto& block : pack_corpus(stream, s.cfg.pretrain.context_length)) {
      examples.push_back(lm_example(std::move(block)));
    }
    Policy policy = make_tiny_lm(s.cfg.model, model_init_seed(s.cfg));
    save_checkpoint(dir / "base.ckpt", Checkpoint{snapshot(policy), {}, "base"});
    StageWork work = train_ce_stage(dir, kPretrainStage, std::move(policy), examples, s.cfg.pretrain, false);
    work.outputs.push_back("base.ckpt");
    work.metrics["blocks"] = examples.size();
    return work;
  });
}

StageResult sft_impl(const Session& s, const StageOptions& opts) {
  json inputs{{"sft", s.cfg.sft}, {"lora", lora_inputs(s, sft_lora_seed(s.cfg))}};
  return run_stage(s, kSftStage, inputs, {kGenDataStage, kPretrainStage}, opts,
                   [&](const fs::path& dir) {
                     const Corpus corpus = load_corpus(s);
                     const auto examples = sft_examples(s, cases_in(corpus, Split::kSft));
                     Policy policy = with_lora(s, load_policy(final_checkpoint(s, kPretrainStage)),
                                               sft_lora_seed(s.cfg));
                     StageWork work = train_ce_stage(dir, kSftStage, std::move(policy), examples,
                                                     s.cfg.sft, s.cfg.lora_enabled);
                     work.metrics["examples"] = examples.size();
                     return work;
                   });
}

StageResult rlaif_impl(const Session& s, RoundMode mode, const StageOptions& opts) {
  const std::string stage = rlaif_stage_name(mode);
  const RoundPlan plan = rlaif_plan(s.cfg, mode);
  json inputs{{"mode", round_mode_name(mode)},
              {"n_rounds", plan.n_rounds},
              {"samples_per_prompt", plan.samples_per_prompt},
              {"rejected_decode", plan.rejected_decode},
              {"dpo", plan.dpo},
              {"teacher", s.cfg.teacher},
              {"lora", lora_inputs(s, rlaif_lora_seed(s.cfg, mode))}};
  return run_stage(s, stage, inputs, {kGenDataStage, kSftStage}, opts, [&](const fs::path& dir) {
    const Corpus corpus = load_corpus(s);
    const auto prompts = prompt_cases(s.layout, cases_in(corpus, Split::kRlaif));
    const Policy start = with_lora(s, load_policy(final_checkpoint(s, kSftStage)),
                                   rlaif_lora_seed(s.cfg, mode));
    const PipelineResult result =
        mode == RoundMode::kDistillDirect
            ? run_distill_direct(start, s.cfg.teacher, s.layout, prompts, plan)
            : run_distilled_dpo(start, s.cfg.teacher, s.layout, prompts, plan);
    StageWork work;
    write_round_artifacts(dir, stage, result, work);

    // Audit against the checkpoints as written to disk. Off-policy records
    // were all sampled from R0.
    std::vector<Policy> saved;
    for (std::size_t k = 0; k < result.checkpoints.size(); ++k) {
      saved.push_back(load_policy(dir / fmt::format("round-{}.ckpt", k)));
    }
    std::vector<PreferenceRecord> records = load_records(dir / "records.jsonl");
    if (mode == RoundMode::kDistilledDpo) {
      for (auto& r : records) r.round = 1;
    }
    const AuditReport audit = audit_on_policy(saved, records, plan.rejected_decode);
    write_json(dir / "audit.json", json{{"checked", audit.checked},
                                        {"matched", audit.matched},
                                        {"passed", audit.passed()},
                                        {"mismatched", audit.mismatched}});
    work.outputs.push_back("audit.json");
    work.metrics["audit"] = json{{"checked", audit.checked}, {"matched", audit.matched}};
    if (!audit.passed()) {
      throw Error("audit", fmt::format("{}: {} of {} records are not re-derivable from their round "
                                       "checkpoint and seed",
                                       stage, audit.checked - audit.matched, audit.checked));
    }
    return work;
  });
}

StageResult rlhf_impl(const Session& s, const StageOptions& opts) {
  const std::string& from = s.cfg.rlhf.from;
  if (from != kSftStage && from != rlaif_stage_name(RoundMode::kDistillDirect) &&
      from != rlaif_stage_name(RoundMode::kDistilledDpo)) {
    throw ConfigError(fmt::format("rlhf.from must be sft or an rlaif stage, got '{}'", from));
  }
  const RoundPlan plan = rlhf_plan(s.cfg);
  const bool human = s.cfg.rlhf.labels == "human";
  json inputs{{"labels", s.cfg.rlhf.labels},
              {"n_rounds", plan.n_rounds},
              {"candidate_temperatures", plan.candidate_temperatures},
              {"candidate_decode", plan.rejected_decode},
              {"dpo", plan.dpo},
              {"lora", lora_inputs(s, rlhf_lora_seed(s.cfg))}};
  return run_stage(s, kRlhfStage, inputs, {kGenDataStage, from}, opts, [&](const fs::path& dir) {
    StageWork work;
    const Corpus corpus = load_corpus(s);
    const Policy start =
        with_lora(s, load_policy(final_checkpoint(s, from)), rlhf_lora_seed(s.cfg));

    // In-distribution screening of every split under the starting policy.
    std::string screening = "split,perplexity\n";
    json ppl = json::object();
    for (auto split : {Split::kSft, Split::kRlaif, Split::kRlhf, Split::kValidation}) {
      const auto examples = sft_examples(s, cases_in(corpus, split));
      const double p = examples.empty() ? 0.0 : perplexity(start, examples);
      screening += fmt::format("{},{:.10g}\n", split_name(split), p);
      ppl[split_name(split)] = p;
    }
    write_text_file(dir / "screening.csv", screening);
    work.outputs.push_back("screening.csv");
    work.metrics["screening_perplexity"] = ppl;

    const auto prompts = prompt_cases(s.layout, cases_in(corpus, Split::kRlhf));
    RlhfResult result;
    if (human) {
      LabelStore store(dir / "labels", label_vocab(s.layout.vocab(), s.cfg.model.vocab),
                       blind_seed(s.cfg));
      StoreLabelSource source(
          store, std::chrono::milliseconds(static_cast<long>(s.cfg.rlhf.wait_seconds * 1000.0)));
      result = run_rlhf(start, prompts, plan, source);
    } else {
      SimulatedLabeler source;
      result = run_rlhf(start, prompts, plan, source);
    }
    if (result.status == RlhfStatus::kAwaitingLabels) {
      json ids = json::array();
      for (const auto& r : result.pending) ids.push_back(r.task_id);
      write_json(dir / "pending.json", json{{"round", result.awaiting_round},
                                            {"unlabeled", result.unlabeled},
                                            {"task_ids", ids}});
      work.awaiting = true;
      work.message = fmt::format("round {}: {} of {} tasks unlabeled; serve them with label-serve",
                                 result.awaiting_round, result.unlabeled, result.pending.size());
      return work;
    }
    std::error_code ec;
    fs::remove(dir / "pending.json", ec);
    write_round_artifacts(dir, "rlhf", result.pipeline, work);
    if (human) work.outputs.insert(work.outputs.end(), {"labels/tasks.jsonl", "labels/labels.jsonl"});
    work.metrics["from"] = from;
    return work;
  });
}

struct EvalModel {
  std::string tag;
  std::size_t round = 0;
  fs::path checkpoint;
};

StageResult eval_impl(const Session& s, const StageOptions& opts) {
  std::vector<std::string> upstream{kGenDataStage, kPretrainStage, kSftStage};
  std::vector<EvalModel> models{{"base", 0, s.dir(kPretrainStage) / "base.ckpt"},
                                {"pretrain", 0, final_checkpoint(s, kPretrainStage)},
                                {"sft", 0, final_checkpoint(s, kSftStage)}};
  const std::vector<std::pair<std::string, std::string>> round_stages{
      {rlaif_stage_name(RoundMode::kDistillDirect), "distill_direct"},
      {rlaif_stage_name(RoundMode::kDistilledDpo), "distilled_dpo"},
      {kRlhfStage, "rlhf"}};
  for (const auto& [stage, tag] : round_stages) {
    const auto m = find_manifest(s, stage);
    if (!m) continue;
    upstream.push_back(stage);
    const auto n = m->at("metrics").at("n_rounds").get<std::size_t>();
    for (std::size_t k = 0; k <= n; ++k) {
      models.push_back({tag, k, s.dir(stage) / fmt::format("round-{}.ckpt", k)});
    }
  }
  json inputs{{"temperatures", s.cfg.eval.temperatures}, {"decode", s.cfg.eval.decode}};
  return run_stage(s, kEvalStage, inputs, upstream, opts, [&](const fs::path& dir) {
    StageWork work;
    const Corpus corpus = load_corpus(s);
    const auto validation = cases_in(corpus, Split::kValidation);
    const auto ppl_examples = sft_examples(s, validation);

    std::vector<EvalRow> rows;
    std::string ppl_csv = "model,round,perplexity\n";
    json scores = json::array();
    for (const auto& m : models) {
      const Policy policy = load_policy(m.checkpoint);
      for (std::size_t si = 0; si < s.cfg.eval.temperatures.size(); ++si) {
        DecodeConfig d = s.cfg.eval.decode;
        d.temperature = s.cfg.eval.temperatures[si];
        // Same stream for every model: common random numbers across rows.
        d.seed = derive_seed(s.cfg.eval.decode.seed, {si});
        const std::string section = fmt::format("T={:.1f}", d.temperature);
        const RougeScores r = evaluate_notes(policy, s.layout, validation, d);
        rows.push_back({m.tag, section, m.round, r});
        scores.push_back({{"model", m.tag},
                          {"round", m.round},
                          {"section", section},
                          {"rouge1", r.rouge1},
                          {"rouge2", r.rouge2},
                          {"rougeL", r.rougeL},
                          {"rougeLsum", r.rougeLsum}});
      }
      ppl_csv += fmt::format("{},{},{:.10g}\n", m.tag, m.round, perplexity(policy, ppl_examples));
    }
    const RoundTable table = round_table(rows);
    write_round_table_csv(dir / "rounds.csv", table);
    write_text_file(dir / "rounds.txt", format_round_table(table));
    write_text_file(dir / "perplexity.csv", ppl_csv);
    write_json(dir / "scores.json", scores);
    work.outputs = {"rounds.csv", "rounds.txt", "perplexity.csv", "scores.json"};
    work.metrics = json{{"models", models.size()}, {"cases", validation.size()}};
    return work;
  });
}

fs::path pricing_path(const Session& s) {
  return s.cfg.cost.pricing.empty() ? default_pricing_path() : fs::path(s.cfg.cost.pricing);
}

StageResult cost_impl(const Session& s, const StageOptions& opts) {
  const fs::path pricing = pricing_path(s);
  if (!fs::exists(pricing)) throw NotFoundError(fmt::format("pricing file {} not found", pricing.string()));
  const Workload& w = s.cfg.cost.workload;
  json inputs{{"n_input_tokens", w.n_input_tokens},
              {"n_output_tokens", w.n_output_tokens},
              {"annual_requests", w.annual_requests},
              {"pricing_sha1", git_blob_sha1_file(pricing)}};
  return run_stage(s, kCostStage, inputs, {}, opts, [&](const fs::path& dir) {
    StageWork work;
    const auto prices = load_pricing(pricing);
    const auto rows = cost_table(prices, w);
    write_cost_csv(dir / "cost.csv", rows);
    write_text_file(dir / "cost.txt", format_cost_table(rows, w));
    work.outputs = {"cost.csv", "cost.txt"};
    json costs = json::object();
    for (const auto& r : prices) costs[r.model_name] = annual_cost_cents(r, w);
    work.metrics = json{{"annual_cost_cents", costs}, {"rpm", average_rpm(w.annual_requests)}};
    return work;
  });
}

std::string fixed(double v, int digits = 4) { return fmt::format("{:.{}f}", v, digits); }

void report_training(std::string& md, const std::string& stage, const json& m) {
  const json& x = m.at("metrics");
  md += fmt::format("### {}\n\n", stage);
  md += fmt::format("- optimizer steps: {}\n", x.at("steps").get<std::size_t>());
  md += fmt::format("- final EMA loss: {}\n", fixed(x.at("final_ema").get<double>()));
  std::string epochs;
  for (const auto& e : x.at("epoch_mean_loss")) {
    epochs += (epochs.empty() ? "" : ", ") + (e.is_number() ? fixed(e.get<double>()) : "n/a");
  }
  md += fmt::format("- epoch mean loss: {}\n", epochs);
  md += fmt::format("- spike events: {}\n", x.at("spikes").size());
  md += fmt::format("- selected checkpoint: epoch {}{}\n", x.at("selected_epoch").get<std::size_t>(),
                    x.at("spike_free").get<bool>() ? "" : " (no spike-free epoch)");
  md += fmt::format("- loss curve: {}/loss.svg\n\n", stage);
}

void report_rounds(std::string& md, const std::string& stage, const json& m) {
  const json& x = m.at("metrics");
  md += fmt::format("### {}\n\n", stage);
  md += "| round | records | dropped | accuracy before | accuracy after | margin after | loss after |\n";
  md += "|---|---|---|---|---|---|---|\n";
  for (const auto& r : x.at("rounds")) {
    if (r.at("trained").get<bool>()) {
      md += fmt::format("| {} | {} | {} | {} | {} | {} | {} |\n", r.at("round").get<std::size_t>(),
                        r.at("records").get<std::size_t>(), r.at("dropped_degenerate").get<std::size_t>(),
                        fixed(r.at("accuracy_before").get<double>()),
                        fixed(r.at("accuracy_after").get<double>()),
                        fixed(r.at("margin_after").get<double>()),
                        fixed(r.at("loss_after").get<double>()));
    } else {
      md += fmt::format("| {} | 0 | {} | - | - | - | - |\n", r.at("round").get<std::size_t>(),
                        r.at("dropped_degenerate").get<std::size_t>());
    }
  }
  md += "\n";
  if (x.contains("audit")) {
    md += fmt::format("- on-policy audit: {} of {} records re-derived\n",
                      x.at("audit").at("matched").get<std::size_t>(),
                      x.at("audit").at("checked").get<std::size_t>());
  }
  if (x.contains("screening_perplexity")) {
    std::string parts;
    for (const auto& [split, p] : x.at("screening_perplexity").items()) {
      parts += fmt::format("{}{} {}", parts.empty() ? "" : ", ", split, fixed(p.get<double>(), 3));
    }
    md += fmt::format("- screening perplexity: {}\n", parts);
  }
  md += fmt::format("- curves: {0}/margin.svg, {0}/accuracy.svg\n\n", stage);
}

StageResult report_impl(const Session& s, const StageOptions& opts) {
  const std::vector<std::string> all{kGenDataStage,
                                     kPretrainStage,
                                     kSftStage,
                                     rlaif_stage_name(RoundMode::kDistillDirect),
                                     rlaif_stage_name(RoundMode::kDistilledDpo),
                                     kRlhfStage,
                                     kEvalStage,
                                     kCostStage};
  std::vector<std::string> present{kGenDataStage};
  require_manifest(s, kGenDataStage);
  for (std::size_t i = 1; i < all.size(); ++i) {
    if (find_manifest(s, all[i])) present.push_back(all[i]);
  }
  return run_stage(s, kReportStage, json{{"stages", present}}, present, opts, [&](const fs::path& dir) {
    std::map<std::string, json> manifests;
    for (const auto& st : present) manifests[st] = require_manifest(s, st);
    std::string md = "# Run report\n\n";
    md += fmt::format("- config sha1: {}\n", config_hash(s.cfg));
    md += fmt::format("- seed: {}\n\n", s.cfg.seed);

    md += "## Stages\n\n| stage | input hash |\n|---|---|\n";
    for (const auto& st : present) {
      md += fmt::format("| {} | {} |\n", st, manifests[st].at("input_hash").get<std::string>());
    }
    md += "\n## Data\n\n";
    const json& data = manifests[kGenDataStage].at("metrics");
    for (const auto& [split, n] : data.at("splits").items()) {
      md += fmt::format("- {}: {} cases\n", split, n.get<std::size_t>());
    }
    md += fmt::format("- pretraining tokens: {}\n\n", data.at("pretrain_tokens").get<std::size_t>());

    if (manifests.count(kPretrainStage) || manifests.count(kSftStage)) md += "## Training\n\n";
    for (const char* st : {kPretrainStage, kSftStage}) {
      if (manifests.count(st)) report_training(md, st, manifests[st]);
    }
    bool header = false;
    for (const auto& st : {rlaif_stage_name(RoundMode::kDistillDirect),
                           rlaif_stage_name(RoundMode::kDistilledDpo), std::string(kRlhfStage)}) {
      if (!manifests.count(st)) continue;
      if (!header) md += "## Preference rounds\n\n";
      header = true;
      report_rounds(md, st, manifests[st]);
    }
    if (manifests.count(kEvalStage)) {
      md += "## Evaluation (validation split, F-measure)\n\n```\n";
      md += read_text(s.dir(kEvalStage) / "rounds.txt");
      md += "```\n\n";
      md += "Perplexity on validation notes:\n\n```\n";
      md += read_text(s.dir(kEvalStage) / "perplexity.csv");
      md += "```\n\n";
    }
    if (manifests.count(kCostStage)) {
      md += "## Inference cost\n\n```\n";
      md += read_text(s.dir(kCostStage) / "cost.txt");
      md += "```\n\n";
    }
    md += "## Artifacts\n\n| file | sha1 |\n|---|---|\n";
    for (const auto& st : present) {
      for (const auto& [file, hash] : manifests[st].at("outputs").items()) {
        md += fmt::format("| {}/{} | {} |\n", st, file, hash.get<std::string>());
      }
    }
    write_text_file(dir / "report.md", md);
    StageWork work;
    work.outputs = {"report.md"};
    return work;
  });
}

template <typename Fn>
StageResult with_session(const RunConfig& cfg, Fn&& fn) {
  cfg.validate();
  RunLock lock(cfg.out_dir);
  write_run_config(cfg);
  const Session s(cfg);
  return fn(s);
}

}  // namespace

StageResult gen_data_stage(const RunConfig& cfg, const StageOptions& opts) {
  return with_session(cfg, [&](const Session& s) { return gen_data_impl(s, opts); });
}
StageResult pretrain_stage(const RunConfig& cfg, const StageOptions& opts) {
  return with_session(cfg, [&](const Session& s) { return pretrain_impl(s, opts); });
}
StageResult sft_stage(const RunConfig& cfg, const StageOptions& opts) {
  return with_session(cfg, [&](const Session& s) { return sft_impl(s, opts); });
}
StageResult rlaif_stage(const RunConfig& cfg, RoundMode mode, const StageOptions& opts) {
  return with_session(cfg, [&](const Session& s) { return rlaif_impl(s, mode, opts); });
}
StageResult rlhf_stage(const RunConfig& cfg, const StageOptions& opts) {
  return with_session(cfg, [&](const Session& s) { return rlhf_impl(s, opts); });
}
StageResult eval_stage(const RunConfig& cfg, const StageOptions& opts) {
  return with_session(cfg, [&](const Session& s) { return eval_impl(s, opts); });
}
StageResult cost_stage(const RunConfig& cfg, const StageOptions& opts) {
  return with_session(cfg, [&](const Session& s) { return cost_impl(s, opts); });
}
StageResult report_stage(const RunConfig& cfg, const StageOptions& opts) {
  return with_session(cfg, [&](const Session& s) { return report_impl(s, opts); });
}

std::vector<StageResult> run_all(const RunConfig& cfg, const StageOptions& opts) {
  cfg.validate();
  RunLock lock(cfg.out_dir);
  write_run_config(cfg);
  const Session s(cfg);
  std::vector<StageResult> out;
  out.push_back(gen_data_impl(s, opts));
  out.push_back(pretrain_impl(s, opts));
  out.push_back(sft_impl(s, opts));
  out.push_back(rlaif_impl(s, RoundMode::kDistillDirect, opts));
  out.push_back(rlaif_impl(s, RoundMode::kDistilledDpo, opts));
  out.push_back(rlhf_impl(s, opts));
  if (out.back().status == StageStatus::kAwaitingLabels) return out;
  out.push_back(eval_impl(s, opts));
  out.push_back(cost_impl(s, opts));
  out.push_back(report_impl(s, opts));
  return out;
}

LabelStore open_label_store(const RunConfig& cfg) {
  const RunConfig r = cfg.resolved();
  const TaskLayout layout(r.task);
  return LabelStore(fs::path(cfg.out_dir) / kRlhfStage / "labels",
                    label_vocab(layout.vocab(), r.model.vocab), blind_seed(r));
}

}  // namespace notecraft
