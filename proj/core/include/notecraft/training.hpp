// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "notecraft/adamw.hpp"
#include "notecraft/checkpoint.hpp"
#include "notecraft/policy.hpp"
#include "notecraft/vocab.hpp"

namespace notecraft {

// Linear warmup from 0 to peak over `warmup_steps`, then cosine decay to 0 at
// `total_steps`.
struct LrSchedule {
  double peak_lr = 3e-4;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;

  void validate() const;
};

double lr_at(const LrSchedule& schedule, std::size_t step);

enum class Stage { kPretrain, kSft };
enum class Batching { kPacking, kPadding };

struct TrainRunConfig {
  Stage stage = Stage::kSft;
  Batching batching = Batching::kPadding;
  std::size_t context_length = 64;  // packing block length
  std::size_t batch_size = 4;
  std::size_t grad_accum_steps = 1;
  std::size_t epochs = 1;
  double peak_lr = 2e-5;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 0;  // 0: derived from epochs and data size
  std::uint64_t seed = 0;
  bool prompt_mask = true;
  std::size_t max_prompt_tokens = 48;
  std::size_t max_response_tokens = 32;
  double weight_decay = 0.0;
  std::size_t ema_window = 250;
  double spike_threshold = 0.5;
  std::size_t spike_window = 50;

  void validate() const;
};

// tokens[t] contributes to the loss iff mask[t] != 0. Position 0 never does.
struct TrainExample {
  TokenSeq tokens;
  std::vector<std::uint8_t> mask;

  std::size_t scored() const;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t tokens_seen = 0;
  double raw_loss = 0.0;
  double lr = 0.0;
  bool skipped = false;
};

struct SpikeEvent {
  std::size_t index = 0;  // position in the step series
  double rise = 0.0;      // ema minus trailing minimum
  bool non_finite = false;
};

struct LossTrace {
  std::vector<StepRecord> steps;
  std::vector<double> ema;
  std::vector<SpikeEvent> spikes;
  std::vector<double> epoch_mean_loss;  // token-weighted, pre-update
  std::vector<std::string> skipped;     // optimizer diagnostics
  std::size_t ema_window = 250;

  std::vector<double> raw() const;
};

// Documents joined as doc EOS doc EOS ...
TokenSeq join_documents(std::span<const TokenSeq> docs);

// Fixed-length blocks; the trailing partial block is dropped.
std::vector<TokenSeq> pack_corpus(std::span<const TokenId> stream, std::size_t context_length);

// Next-token example over a packed block: every position after the first is scored.
TrainExample lm_example(TokenSeq block);

// Prompt keeps its last `max_prompt` tokens; the response keeps its first
// tokens and is forced to end with EOS within `max_response` tokens. The
// mask is set exactly on response positions.
TrainExample sft_example(std::span<const TokenId> prompt, std::span<const TokenId> response,
                         std::size_t max_prompt, std::size_t max_response);

// Exponential moving average with λ = 1 − 2/(n+1); y₀ = x₀. Non-finite
// inputs carry the previous value forward.
std::vector<double> ema(std::span<const double> raw, std::size_t window);

// An event fires when the EMA first climbs `rise_threshold` or more above its
// minimum over the preceding `window` values; it re-arms once the rise drops
// back under the threshold. Non-finite raw losses always fire.
std::vector<SpikeEvent> detect_spikes(std::span<const double> raw, std::span<const double> smoothed,
                                      double rise_threshold, std::size_t window);
std::vector<SpikeEvent> detect_spikes(const LossTrace& trace, double rise_threshold,
                                      std::size_t window);

// Σ NLL over the scored positions of one example (differentiable).
Tensor example_nll(const Policy& policy, const TrainExample& example,
                   const ForwardOptions& opts = {});

using EpochCallback =
    std::function<void(std::size_t epoch, const Policy& policy, const RngCursor& cursor)>;

// Minimizes token-mean NLL with AdamW under the warmup-cosine schedule. Each
// optimizer step covers batch_size·grad_accum_steps examples and divides by
// the step's total scored tokens, so accumulation only regroups the same sum.
LossTrace train_ce(Policy& policy, std::span<const TrainExample> data,
                   const TrainRunConfig& cfg, const EpochCallback& on_epoch = {});

// step,tokens,raw,ema,lr
void write_loss_csv(const std::filesystem::path& path, const LossTrace& trace);

}  // namespace notecraft
