// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "notecraft/evalsuite.hpp"
#include "notecraft/generation.hpp"
#include "notecraft/preference.hpp"
#include "notecraft/rng.hpp"
#include "notecraft/synthtask.hpp"
#include "notecraft/training.hpp"

using namespace notecraft;

namespace {

TokenSeq random_seq(Rng& rng, std::size_t n, std::size_t vocab) {
  TokenSeq s(n);
  for (auto& t : s) t = static_cast<TokenId>(5 + rng.below(vocab - 5));
  return s;
}

void BM_Decode(benchmark::State& state) {
  const Policy lm = make_tiny_lm(TinyLmDims{}, 1);
  Rng rng(2);
  const TokenSeq prompt = random_seq(rng, 20, 32);
  DecodeConfig cfg;
  cfg.max_new_tokens = static_cast<std::size_t>(state.range(0));
  cfg.seed = 3;
  std::size_t tokens = 0;
  for (auto _ : state) {
    cfg.seed += 1;
    const auto out = decode(lm, prompt, cfg);
    tokens += out.size();
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["tokens/s"] = benchmark::Counter(static_cast<double>(tokens), benchmark::Counter::kIsRate);
}
BENCHMARK(BM_Decode)->Arg(16)->Arg(64);

void BM_SftEpoch(benchmark::State& state) {
  TaskSpec spec;
  spec.splits = SplitSizes{0, 32, 0, 0, 0};
  const Corpus corpus = generate_corpus(spec);
  const TaskLayout layout(spec);
  std::vector<TrainExample> data;
  for (const auto* c : cases_in(corpus, Split::kSft)) {
    data.push_back(sft_example(make_prompt(layout, *c), c->gold_note, 48, 32));
  }
  TrainRunConfig cfg;
  cfg.epochs = 1;
  cfg.batch_size = static_cast<std::size_t>(state.range(0));
  cfg.peak_lr = 1e-3;
  cfg.ema_window = 5;
  cfg.spike_window = 5;
  for (auto _ : state) {
    Policy lm = make_tiny_lm(TinyLmDims{}, 4);
    const auto trace = train_ce(lm, data, cfg);
    benchmark::DoNotOptimize(trace.steps.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.size()));
}
BENCHMARK(BM_SftEpoch)->Arg(4)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_DpoLossBackward(benchmark::State& state) {
  const Policy lm = make_tiny_lm(TinyLmDims{}, 5);
  const Policy ref = snapshot(lm);
  Rng rng(6);
  PreferenceRecord r;
  r.prompt = random_seq(rng, 20, 32);
  r.preferred = random_seq(rng, 12, 32);
  r.rejected = random_seq(rng, 12, 32);
  r.preferred.push_back(Vocab::kEos);
  r.rejected.push_back(Vocab::kEos);
  const double rp = log_prob(ref, r.prompt, r.preferred), rn = log_prob(ref, r.prompt, r.rejected);
  for (auto _ : state) {
    Policy p = lm;
    for (auto& t : p.trainable_parameters()) t.zero_grad();
    auto g = dpo_loss_graph(p, r, rp, rn, 0.1);
    g.loss.backward();
    benchmark::DoNotOptimize(g.margin);
  }
}
BENCHMARK(BM_DpoLossBackward);

void BM_Rouge(benchmark::State& state) {
  Rng rng(7);
  const auto n = static_cast<std::size_t>(state.range(0));
  TokenSeq a = random_seq(rng, n, 32), b = random_seq(rng, n, 32);
  for (std::size_t i = 8; i < n; i += 9) a[i] = b[i] = Vocab::kNewline;
  for (auto _ : state) benchmark::DoNotOptimize(score_note(a, b));
}
BENCHMARK(BM_Rouge)->Arg(32)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
