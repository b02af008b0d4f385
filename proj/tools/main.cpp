// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

// notecraft: runs the note-generation pipeline stage by stage.
//
// Precedence: built-in defaults < --config file < --set key=value < the
// dedicated flags (--seed, --out-dir).

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "notecraft/errors.hpp"
#include "notecraft/labelstore.hpp"
#include "notecraft/runconfig.hpp"
#include "notecraft/stages.hpp"

namespace {

using notecraft::RunConfig;
using notecraft::StageResult;
using notecraft::StageStatus;

constexpr int kExitFailure = 1;
constexpr int kExitAwaiting = 75;  // EX_TEMPFAIL: rerun once labels are in

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool force = false;
};

void add_common(CLI::App* cmd, Common& c, bool with_force = true) {
  cmd->add_option("-c,--config", c.config, "JSON run config");
  cmd->add_option("--set", c.sets, "override a config key, e.g. --set sft.epochs=3");
  cmd->add_option("--seed", c.seed, "global seed");
  cmd->add_option("-o,--out-dir", c.out_dir, "run directory");
  if (with_force) cmd->add_flag("-f,--force", c.force, "rerun even when inputs are unchanged");
}

RunConfig load(const Common& c) {
  std::vector<std::string> sets = c.sets;
  if (c.seed) sets.push_back(fmt::format("seed={}", *c.seed));
  if (!c.out_dir.empty()) sets.push_back("out_dir=" + nlohmann::json(c.out_dir).dump());
  return notecraft::load_run_config(c.config, sets);
}

int print(const StageResult& r) {
  std::cout << r.to_json().dump() << std::endl;
  return r.status == StageStatus::kAwaitingLabels ? kExitAwaiting : 0;
}

void fail(const std::string& kind, const std::string& message) {
  std::cerr << nlohmann::json{{"error", kind}, {"message", message}}.dump() << std::endl;
}

notecraft::LabelServer* g_server = nullptr;

extern "C" void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"notecraft: synthetic note generation with SFT, RLAIF and RLHF"};
  app.require_subcommand(1);
  Common common;
  notecraft::StageOptions opts;
  std::string mode = "distill_direct";
  std::string labels;

  auto* gen = app.add_subcommand("gen-data", "generate the synthetic corpus");
  auto* pre = app.add_subcommand("pretrain", "continued pretraining on packed notes");
  auto* sft = app.add_subcommand("sft", "supervised fine-tuning");
  auto* rlaif = app.add_subcommand("rlaif", "AI-feedback preference rounds");
  rlaif->add_option("--mode", mode, "distill_direct (on-policy) or distilled_dpo (off-policy)")
      ->check(CLI::IsMember({"distill_direct", "distilled_dpo"}));
  auto* rlhf = app.add_subcommand("rlhf", "human-feedback preference rounds");
  auto* serve = app.add_subcommand(
      "label-serve", "serve RLHF labeling tasks over HTTP (token from NOTECRAFT_LABEL_TOKEN)");
  std::string host;
  int port = -1;
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "bind port; 0 picks a free one");
  auto* eval = app.add_subcommand("eval", "ROUGE and perplexity on the validation split");
  auto* cost = app.add_subcommand("cost", "annual inference cost table");
  auto* report = app.add_subcommand("report", "collate results into report.md");
  auto* all = app.add_subcommand("all", "every stage in order with simulated labels by default");
  for (auto* cmd : {rlhf, all}) {
    cmd->add_option("--labels", labels, "simulated or human")
        ->check(CLI::IsMember({"simulated", "human"}));
  }
  for (auto* cmd : {gen, pre, sft, rlaif, rlhf, eval, cost, report, all}) add_common(cmd, common);
  add_common(serve, common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (!labels.empty()) common.sets.push_back("rlhf.labels=" + labels);
    const RunConfig cfg = load(common);
    opts.force = common.force;
    if (*gen) return print(notecraft::gen_data_stage(cfg, opts));
    if (*pre) return print(notecraft::pretrain_stage(cfg, opts));
    if (*sft) return print(notecraft::sft_stage(cfg, opts));
    if (*rlaif) {
      return print(notecraft::rlaif_stage(cfg, notecraft::parse_round_mode(mode), opts));
    }
    if (*rlhf) return print(notecraft::rlhf_stage(cfg, opts));
    if (*eval) return print(notecraft::eval_stage(cfg, opts));
    if (*cost) return print(notecraft::cost_stage(cfg, opts));
    if (*report) return print(notecraft::report_stage(cfg, opts));
    if (*all) {
      int code = 0;
      for (const auto& r : notecraft::run_all(cfg, opts)) code = print(r);
      return code;
    }
    if (*serve) {
      const char* token = std::getenv("NOTECRAFT_LABEL_TOKEN");
      auto store = notecraft::open_label_store(cfg);
      notecraft::LabelServer server(store, token != nullptr ? token : "");
      const int bound = server.bind(host.empty() ? cfg.label_server.host : host,
                                    port >= 0 ? port : cfg.label_server.port);
      std::cout << nlohmann::json{{"status", "listening"},
                                  {"host", host.empty() ? cfg.label_server.host : host},
                                  {"port", bound},
                                  {"auth", token != nullptr && *token != '\0'}}
                       .dump()
                << std::endl;
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.run();
      g_server = nullptr;
      return 0;
    }
  } catch (const notecraft::Error& e) {
    fail(e.kind(), e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    fail("internal", e.what());
    return kExitFailure;
  }
  return kExitFailure;
}
