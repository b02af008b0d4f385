// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numbers>

#include <unistd.h>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "notecraft/checkpoint.hpp"
#include "notecraft/costmodel.hpp"
#include "notecraft/evalsuite.hpp"
#include "notecraft/preference.hpp"
#include "notecraft/runconfig.hpp"
#include "notecraft/stages.hpp"
#include "notecraft/training.hpp"
#include "support/testing.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace notecraft;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json read_json(const fs::path& p) {
  std::ifstream in(p);
  return json::parse(in);
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---- 1 ---------------------------------------------------------------------

Verdict dpo_identity() {
  Rng rng(101);
  double worst = 0.0;
  std::size_t n = 0;
  const Policy tab = testing::random_tabular(9, 3, 2.0);
  const Policy lm = make_tiny_lm(TinyLmDims{}, 4);
  for (const Policy* p : {&tab, &lm}) {
    const Policy ref = snapshot(*p);
    for (int i = 0; i < 100; ++i) {
      const auto r = testing::random_record(rng, p->vocab_size(), 8);
      worst = std::max(worst, std::abs(dpo_loss(*p, ref, r, 0.1).loss - std::numbers::ln2));
      ++n;
    }
  }
  return {worst <= 1e-9, fmt::format("{} records, max |loss - ln 2| = {:.3g}", n, worst)};
}

// ---- 2 ---------------------------------------------------------------------

Verdict gradient_fidelity() {
  const auto start = Clock::now();
  Rng rng(202);
  double worst = 0.0;
  std::size_t checked = 0;
  auto record_check = [&](const testing::GradCheck& g) {
    worst = std::max(worst, g.max_rel_error);
    checked += g.checked;
  };

  // Tabular: every parameter.
  Policy tab = testing::random_tabular(8, 5);
  const Policy tab_ref = snapshot(testing::random_tabular(8, 6));
  for (int trial = 0; trial < 3; ++trial) {
    const auto r = testing::random_record(rng, 8);
    const double rp = log_prob(tab_ref, r.prompt, r.preferred);
    const double rn = log_prob(tab_ref, r.prompt, r.rejected);
    const auto params = tab.trainable_parameters();
    record_check(testing::check_gradient([&] { return dpo_loss_graph(tab, r, rp, rn, 0.5).loss; },
                                         params, testing::all_coords(params)));
    const auto ex = sft_example(r.prompt, r.preferred, 16, 16);
    record_check(testing::check_gradient([&] { return example_nll(tab, ex); }, params,
                                         testing::all_coords(params)));
  }

  // TinyLM at the default dimensions: 200 sampled parameters per loss.
  Policy lm = make_tiny_lm(TinyLmDims{}, 7);
  const Policy lm_ref = snapshot(make_tiny_lm(TinyLmDims{}, 8));
  const auto r = testing::random_record(rng, 32, 8);
  const double rp = log_prob(lm_ref, r.prompt, r.preferred);
  const double rn = log_prob(lm_ref, r.prompt, r.rejected);
  const auto params = lm.trainable_parameters();
  record_check(testing::check_gradient([&] { return dpo_loss_graph(lm, r, rp, rn, 0.5).loss; },
                                       params, testing::sampled_coords(params, 200, rng)));
  const auto ex = sft_example(r.prompt, r.preferred, 16, 16);
  record_check(testing::check_gradient([&] { return example_nll(lm, ex); }, params,
                                       testing::sampled_coords(params, 200, rng)));

  const double secs = seconds_since(start);
  return {worst <= 1e-4 && secs < 30.0,
          fmt::format("{} coordinates, max rel error {:.3g}, {:.2f} s", checked, worst, secs)};
}

// ---- 3 ---------------------------------------------------------------------

double max_logit_gap(const Policy& a, const Policy& b, const TokenSeq& seq) {
  const Tensor la = a.model().logits(seq, 0, seq.size());
  const Tensor lb = b.model().logits(seq, 0, seq.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < la.numel(); ++i) worst = std::max(worst, std::abs(la.at(i) - lb.at(i)));
  return worst;
}

Verdict lora_checks() {
  const auto start = Clock::now();
  Rng rng(303);
  const Policy base = make_tiny_lm(TinyLmDims{}, 9);
  const LoraConfig cfg;  // r = 8, alpha = 32
  Policy adapted = attach_lora(base, cfg, 10);
  const auto& lm = dynamic_cast<const TinyLm&>(adapted.model());
  const double scale = lm.adapter(LoraTarget::kW1)->scale();

  double attach_gap = 0.0;
  std::vector<TokenSeq> seqs;
  for (int i = 0; i < 100; ++i) {
    seqs.push_back(testing::random_tokens(rng, 1 + rng.below(20), 0, 32));
    attach_gap = std::max(attach_gap, max_logit_gap(base, adapted, seqs.back()));
  }

  // Non-zero B so the merge has something to fold in.
  auto& mutable_lm = dynamic_cast<TinyLm&>(adapted.mutable_model());
  for (auto target : cfg.targets) {
    LoraAdapter a = *mutable_lm.adapter(target);
    for (auto& v : a.b.mutable_values()) v = rng.uniform(-0.2, 0.2);
    mutable_lm.set_adapter(a);
  }
  const Policy merged = merge_lora(Policy(adapted));
  double merge_gap = 0.0;
  for (const auto& s : seqs) merge_gap = std::max(merge_gap, max_logit_gap(adapted, merged, s));

  const double secs = seconds_since(start);
  return {scale == 4.0 && attach_gap == 0.0 && merge_gap <= 1e-9 && secs < 10.0,
          fmt::format("scale {}, attach gap {:.3g}, merge gap over 100 sequences {:.3g}, {:.2f} s",
                      scale, attach_gap, merge_gap, secs)};
}

// ---- 4 ---------------------------------------------------------------------

bool is_subsequence(const TokenSeq& sub, const TokenSeq& seq) {
  std::size_t j = 0;
  for (std::size_t i = 0; i < seq.size() && j < sub.size(); ++i) j += seq[i] == sub[j];
  return j == sub.size();
}

std::size_t brute_lcs(TokenSeq a, TokenSeq b) {
  if (a.size() > b.size()) std::swap(a, b);
  std::size_t best = 0;
  TokenSeq sub;
  for (std::uint32_t mask = 0; mask < (1u << a.size()); ++mask) {
    const auto bits = static_cast<std::size_t>(__builtin_popcount(mask));
    if (bits <= best) continue;
    sub.clear();
    for (std::size_t i = 0; i < a.size(); ++i) {
      if (mask & (1u << i)) sub.push_back(a[i]);
    }
    if (is_subsequence(sub, b)) best = bits;
  }
  return best;
}

TokenSeq ternary(std::size_t index, std::size_t length) {
  TokenSeq s(length);
  for (auto& t : s) {
    t = static_cast<TokenId>(index % 3);
    index /= 3;
  }
  return s;
}

Verdict rouge_oracle() {
  const auto start = Clock::now();
  std::vector<std::string> failures;
  auto expect = [&](const char* what, double got, double want) {
    if (std::abs(got - want) > 1e-12) failures.push_back(fmt::format("{} {} != {}", what, got, want));
  };
  // the cat sat on the mat / the cat is on the mat
  const TokenSeq cand{10, 11, 12, 13, 10, 14}, ref{10, 11, 15, 13, 10, 14};
  expect("R1", rouge_n(cand, ref, 1), 5.0 / 6.0);
  expect("R2", rouge_n(cand, ref, 2), 3.0 / 5.0);
  expect("RL", rouge_l(cand, ref), 5.0 / 6.0);
  expect("R1 clipped", rouge_n(TokenSeq{10, 10, 10}, TokenSeq{10, 11}, 1), 0.4);
  expect("RL unequal", rouge_l(TokenSeq{20, 21, 22, 23}, TokenSeq{20, 22}), 2.0 / 3.0);
  constexpr TokenId nl = Vocab::kNewline;
  expect("RLsum", rouge_lsum(TokenSeq{30, 32, nl, 34, 33}, TokenSeq{30, 31, 32, nl, 33, 34}), 2.0 / 3.0);
  expect("RLsum union", rouge_lsum(TokenSeq{32, 33, nl, 30, 31}, TokenSeq{30, 31, 32, 33}), 1.0);

  // Exhaustive over 3 symbols: every pair with |a| + |b| <= 10, and every
  // pair of equal length up to 5 on each side.
  std::size_t pairs = 0, lcs_bad = 0, lsum_bad = 0;
  for (std::size_t la = 0; la <= 10; ++la) {
    for (std::size_t lb = 0; la + lb <= 10; ++lb) {
      const auto na = static_cast<std::size_t>(std::pow(3, la));
      const auto nb = static_cast<std::size_t>(std::pow(3, lb));
      for (std::size_t i = 0; i < na; ++i) {
        const auto a = ternary(i, la);
        for (std::size_t j = 0; j < nb; ++j) {
          const auto b = ternary(j, lb);
          lcs_bad += lcs_length(a, b) != brute_lcs(a, b);
          lsum_bad += std::abs(rouge_lsum(a, b, 99) - rouge_l(a, b)) > 1e-12;
          ++pairs;
        }
      }
    }
  }
  // Random pairs with each side up to length 10.
  Rng rng(404);
  for (int t = 0; t < 50000; ++t) {
    const auto a = testing::random_tokens(rng, rng.below(11), 0, 3);
    const auto b = testing::random_tokens(rng, rng.below(11), 0, 3);
    lcs_bad += lcs_length(a, b) != brute_lcs(a, b);
    ++pairs;
  }
  const double secs = seconds_since(start);
  const bool ok = failures.empty() && lcs_bad == 0 && lsum_bad == 0 && secs < 60.0;
  return {ok, fmt::format("hand examples {}, {} LCS pairs ({} mismatches), single-sentence Lsum "
                          "mismatches {}, {:.2f} s",
                          failures.empty() ? "exact" : failures.front(), pairs, lcs_bad, lsum_bad,
                          secs)};
}

// ---- 5 ---------------------------------------------------------------------

Verdict cost_model() {
  const auto prices = load_pricing(default_pricing_path());
  const Workload w;  // 3000 in, 1000 out, 1e6 requests
  // Annual dollars from the May 2024 list prices, computed by hand.
  const std::map<std::string, std::int64_t> expected_cents{
      {"Gemini 1.5 Pro", 2100000}, {"Gemini 1.0 Pro", 300000}, {"GPT-4 Turbo", 6000000},
      {"GPT-3.5 Turbo", 500000},   {"LLaMA-Clinic", 80000},    {"LLaMA-2 70B", 360000},
      {"Mixtral 8x7B", 200000},    {"Mixtral 8x22B", 480000}};
  const auto rows = cost_table(prices, w);
  std::size_t matched = 0;
  const PriceEntry *clinic = nullptr, *gemini = nullptr;
  for (const auto& p : prices) {
    if (auto it = expected_cents.find(p.model_name);
        it != expected_cents.end() && annual_cost_cents(p, w) == it->second) {
      ++matched;
    }
    if (p.model_name == "LLaMA-Clinic") clinic = &p;
    if (p.model_name == "Gemini 1.0 Pro") gemini = &p;
  }
  if (clinic == nullptr || gemini == nullptr) return {false, "pricing table lacks a model"};
  const double ratio = cost_ratio(*gemini, *clinic, w);
  const double rpm = average_rpm(w.annual_requests);
  const double rpm_truncated = std::floor(rpm * 1000.0) / 1000.0;
  const bool ok = rows.size() == 8 && matched == 8 && annual_cost_cents(*clinic, w) == 80000 &&
                  annual_cost_cents(*gemini, w) == 300000 && std::abs(ratio - 3.75) <= 1e-12 &&
                  rpm_truncated == 5.707 && std::round(rpm * 10) / 10 == 5.7;
  return {ok, fmt::format("LLaMA-Clinic ${:.2f}, Gemini 1.0 Pro ${:.2f}, ratio {}, RPM {:.5f}, "
                          "{}/8 rows exact",
                          annual_cost_cents(*clinic, w) / 100.0, annual_cost_cents(*gemini, w) / 100.0,
                          ratio, rpm, matched)};
}

// ---- 6 ---------------------------------------------------------------------

Verdict scheduler() {
  double worst = 0.0;
  for (const auto& s : {LrSchedule{3e-4, 10, 110}, LrSchedule{2e-5, 0, 1000}, LrSchedule{1e-3, 7, 20}}) {
    const double mid = static_cast<double>(s.warmup_steps + s.total_steps) / 2.0;
    worst = std::max(worst, std::abs(lr_at(s, s.warmup_steps) - s.peak_lr));
    worst = std::max(worst, std::abs(lr_at(s, s.total_steps)));
    if (std::floor(mid) == mid) {
      worst = std::max(worst, std::abs(lr_at(s, static_cast<std::size_t>(mid)) - s.peak_lr / 2.0));
    }
  }
  const std::size_t n = 250;
  const double lambda = 1.0 - 2.0 / (n + 1.0);
  const std::vector<double> flat(600, 1.75);
  for (double y : ema(flat, n)) worst = std::max(worst, std::abs(y - 1.75));
  std::vector<double> step(600, 0.0);
  const std::size_t t0 = 100;
  for (std::size_t t = t0; t < step.size(); ++t) step[t] = 1.0;
  const auto y = ema(step, n);
  for (std::size_t t = 0; t < step.size(); ++t) {
    const double want = t < t0 ? 0.0 : 1.0 - std::pow(lambda, static_cast<double>(t - t0 + 1));
    worst = std::max(worst, std::abs(y[t] - want));
  }
  return {worst <= 1e-12, fmt::format("max deviation {:.3g}", worst)};
}

// ---- 7-10: pipeline runs ---------------------------------------------------

constexpr std::uint64_t kSeeds[] = {1, 2, 3, 4, 5};

struct Workspace {
  fs::path root = fs::temp_directory_path() / fmt::format("notecraft-acceptance-{}", ::getpid());
  Workspace() {
    fs::remove_all(root);
    fs::create_directories(root);
  }
  ~Workspace() {
    std::error_code ec;
    fs::remove_all(root, ec);
  }
  fs::path run(const std::string& name) const { return root / name; }
};

RunConfig config_for(const fs::path& dir, std::uint64_t seed,
                     const std::vector<std::string>& extra = {}) {
  std::vector<std::string> sets{"out_dir=" + dir.string(), fmt::format("seed={}", seed)};
  sets.insert(sets.end(), extra.begin(), extra.end());
  return load_run_config({}, sets);
}

// Validation ROUGE-1 by (model, round, section).
using ScoreMap = std::map<std::tuple<std::string, std::size_t, std::string>, double>;

ScoreMap load_scores(const fs::path& run) {
  ScoreMap out;
  for (const auto& row : read_json(run / kEvalStage / "scores.json")) {
    out[{row.at("model").get<std::string>(), row.at("round").get<std::size_t>(),
         row.at("section").get<std::string>()}] = row.at("rouge1").get<double>();
  }
  return out;
}

std::vector<std::string> sections(const RunConfig& cfg) {
  std::vector<std::string> out;
  for (double t : cfg.eval.temperatures) out.push_back(fmt::format("T={:.1f}", t));
  return out;
}

struct Runs {
  Workspace ws;
  std::map<std::uint64_t, fs::path> dirs;
  double seconds = 0.0;
  std::string error;

  void ensure() {
    if (!dirs.empty() || !error.empty()) return;
    const auto start = Clock::now();
    try {
      for (auto seed : kSeeds) {
        const auto dir = ws.run(fmt::format("seed-{}", seed));
        run_all(config_for(dir, seed));
        dirs[seed] = dir;
      }
    } catch (const std::exception& e) {
      error = e.what();
    }
    seconds = seconds_since(start);
  }
};

Verdict efficacy(Runs& runs) {
  runs.ensure();
  if (!runs.error.empty()) return {false, "pipeline failed: " + runs.error};
  const auto secs = sections(config_for(runs.dirs.at(1), 1));
  const std::size_t final_round = config_for(runs.dirs.at(1), 1).rlaif.n_rounds;
  bool ok = runs.seconds / std::size(kSeeds) <= 600.0;
  std::string detail;
  for (const auto& section : secs) {
    std::vector<double> base, sft, gain;
    for (const auto& [seed, dir] : runs.dirs) {
      const auto s = load_scores(dir);
      base.push_back(s.at({"base", 0, section}));
      sft.push_back(s.at({"sft", 0, section}));
      gain.push_back(s.at({"distill_direct", final_round, section}) - s.at({"sft", 0, section}));
    }
    const double mb = median(base), ms = median(sft), mg = median(gain);
    ok = ok && mb < ms && mg >= 0.02;
    detail += fmt::format("{}: base {:.4f} < SFT {:.4f}, R{}-SFT {:+.4f}; ", section, mb, ms,
                          final_round, mg);
  }
  detail += fmt::format("{:.1f} s per full run", runs.seconds / std::size(kSeeds));
  return {ok, detail};
}

Verdict on_policy_audit(Runs& runs) {
  runs.ensure();
  if (!runs.error.empty()) return {false, "pipeline failed: " + runs.error};
  std::size_t total = 0, matched = 0;
  for (const auto& [seed, dir] : runs.dirs) {
    const auto stage = dir / rlaif_stage_name(RoundMode::kDistillDirect);
    // The decode settings come from the written config, the checkpoints from disk.
    const RunConfig logged = read_json(dir / "config.json").get<RunConfig>();
    std::map<int, Policy> checkpoints;
    for (const auto& r : load_records(stage / "records.jsonl")) {
      ++total;
      if (r.source != RecordSource::kPolicyRound || r.round < 1) continue;
      auto it = checkpoints.find(r.round - 1);
      if (it == checkpoints.end()) {
        it = checkpoints
                 .emplace(r.round - 1,
                          load_checkpoint(stage / fmt::format("round-{}.ckpt", r.round - 1)).policy)
                 .first;
      }
      DecodeConfig d = logged.rlaif.rejected_decode;
      d.seed = r.decode_seed;
      TokenSeq again = decode(it->second, r.prompt, d);
      if (again.empty() || again.back() != Vocab::kEos) again.push_back(Vocab::kEos);
      matched += again == r.rejected;
    }
  }
  return {total > 0 && matched == total,
          fmt::format("{}/{} rejected sequences re-derived over {} seeds", matched, total,
                      runs.dirs.size())};
}

struct LadderPoint {
  std::vector<double> margin_gain;  // per seed
  std::vector<double> worst_drop;   // per seed, over sections and rounds
};

LadderPoint ladder_point(const std::map<std::uint64_t, fs::path>& dirs) {
  LadderPoint out;
  for (const auto& [seed, dir] : dirs) {
    const auto manifest = read_json(dir / rlaif_stage_name(RoundMode::kDistillDirect) / "stage.json");
    const auto& r1 = manifest.at("metrics").at("rounds").at(0);
    out.margin_gain.push_back(r1.value("trained", false)
                                  ? r1.at("margin_after").get<double>() -
                                        r1.at("margin_before").get<double>()
                                  : 0.0);
    const auto cfg = read_json(dir / "config.json").get<RunConfig>();
    const auto scores = load_scores(dir);
    double worst = 0.0;
    for (const auto& section : sections(cfg)) {
      for (std::size_t k = 1; k <= cfg.rlaif.n_rounds; ++k) {
        worst = std::max(worst, scores.at({"distill_direct", k - 1, section}) -
                                    scores.at({"distill_direct", k, section}));
      }
    }
    out.worst_drop.push_back(worst);
  }
  return out;
}

// Reuses the data, pretrain and SFT stages of `src` and reruns the
// preference stage at another DPO learning rate.
fs::path rerun_with_lr(const Workspace& ws, const fs::path& src, std::uint64_t seed, double lr,
                       const std::string& tag) {
  const auto dir = ws.run(fmt::format("{}-seed-{}", tag, seed));
  fs::create_directories(dir);
  for (const char* stage : {kGenDataStage, kPretrainStage, kSftStage}) {
    fs::copy(src / stage, dir / stage, fs::copy_options::recursive);
  }
  const auto cfg = config_for(dir, seed, {fmt::format("rlaif.dpo.lr={}", lr)});
  rlaif_stage(cfg, RoundMode::kDistillDirect);
  eval_stage(cfg);
  return dir;
}

Verdict lr_ladder(Runs& runs) {
  runs.ensure();
  if (!runs.error.empty()) return {false, "pipeline failed: " + runs.error};
  const double mid_lr = config_for(runs.dirs.at(1), 1).rlaif.dpo.lr;
  const double high_lr = 4.0 * mid_lr, low_lr = mid_lr / 10.0;
  std::map<std::uint64_t, fs::path> high, low;
  try {
    for (const auto& [seed, dir] : runs.dirs) {
      high[seed] = rerun_with_lr(runs.ws, dir, seed, high_lr, "high");
      low[seed] = rerun_with_lr(runs.ws, dir, seed, low_lr, "low");
    }
  } catch (const std::exception& e) {
    return {false, fmt::format("ladder run failed: {}", e.what())};
  }
  const auto h = ladder_point(high), m = ladder_point(runs.dirs), l = ladder_point(low);
  const double gh = median(h.margin_gain), gm = median(m.margin_gain), gl = median(l.margin_gain);
  auto drops = [](const LadderPoint& p) {
    return static_cast<std::size_t>(
        std::count_if(p.worst_drop.begin(), p.worst_drop.end(), [](double d) { return d >= 0.05; }));
  };
  const double mid_worst = *std::max_element(m.worst_drop.begin(), m.worst_drop.end());
  const bool ok = gl < gm && gl < gh && drops(h) >= 1 && drops(m) == 0;
  return {ok, fmt::format("median round-1 margin gain high {:.4f} / mid {:.4f} / low {:.4f}; "
                          "seeds with a drop >= 0.05: high {}, mid {} (worst mid drop {:.4f}); "
                          "LRs {:g} / {:g} / {:g}",
                          gh, gm, gl, drops(h), drops(m), mid_worst, high_lr, mid_lr, low_lr)};
}

Verdict determinism(Runs& runs) {
  runs.ensure();
  if (!runs.error.empty()) return {false, "pipeline failed: " + runs.error};
  const auto dir = runs.ws.run("repeat-seed-1");
  try {
    run_all(config_for(dir, 1));
  } catch (const std::exception& e) {
    return {false, fmt::format("second run failed: {}", e.what())};
  }
  const auto a = read_bytes(runs.dirs.at(1) / kReportStage / "report.md");
  const auto b = read_bytes(dir / kReportStage / "report.md");
  return {!a.empty() && a == b,
          fmt::format("report.md {} bytes, sha1 {} vs {}", a.size(), git_blob_sha1(a).substr(0, 12),
                      git_blob_sha1(b).substr(0, 12))};
}

}  // namespace

int main() {
  Runs runs;
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"1 DPO identity point", dpo_identity},
      {"2 gradient fidelity", gradient_fidelity},
      {"3 LoRA identity, merge and scale", lora_checks},
      {"4 ROUGE oracle", rouge_oracle},
      {"5 cost model", cost_model},
      {"6 scheduler and EMA", scheduler},
      {"7 pipeline efficacy", [&] { return efficacy(runs); }},
      {"8 on-policy audit", [&] { return on_policy_audit(runs); }},
      {"9 learning-rate ladder", [&] { return lr_ladder(runs); }},
      {"10 determinism", [&] { return determinism(runs); }},
  };
  int failed = 0;
  for (const auto& [name, check] : criteria) {
    Verdict v;
    try {
      v = check();
    } catch (const std::exception& e) {
      v = {false, fmt::format("exception: {}", e.what())};
    }
    failed += !v.pass;
    fmt::print("{} criterion {}: {}\n", v.pass ? "PASS" : "FAIL", name, v.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
