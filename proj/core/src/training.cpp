// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>

#include <fmt/format.h>
#include <fmt/os.h>

#include "notecraft/errors.hpp"
#include "notecraft/rng.hpp"

namespace notecraft {

void LrSchedule::validate() const {
  if (!(peak_lr >= 0.0)) throw ConfigError("schedule: peak_lr must be >= 0");
  if (total_steps == 0) throw ConfigError("schedule: total_steps must be positive");
  if (warmup_steps >= total_steps) {
    throw ConfigError(fmt::format("schedule: warmup {} must be below total {}", warmup_steps,
                                  total_steps));
  }
}

double lr_at(const LrSchedule& s, std::size_t step) {
  s.validate();
  if (step > s.total_steps) {
    throw ContractError(fmt::format("lr_at: step {} beyond total {}", step, s.total_steps));
  }
  if (step < s.warmup_steps) {
    return s.peak_lr * static_cast<double>(step) / static_cast<double>(s.warmup_steps);
  }
  const double progress = static_cast<double>(step - s.warmup_steps) /
                          static_cast<double>(s.total_steps - s.warmup_steps);
  return s.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

void TrainRunConfig::validate() const {
  if (batching == Batching::kPacking && stage != Stage::kPretrain) {
    throw ConfigError("train: packing is only used for pretraining");
  }
  if (prompt_mask && stage != Stage::kSft) {
    throw ConfigError("train: prompt masking only applies to SFT");
  }
  if (batch_size == 0 || grad_accum_steps == 0) {
    throw ConfigError("train: batch_size and grad_accum_steps must be positive");
  }
  if (stage == Stage::kPretrain && context_length < 2) {
    throw ConfigError("train: context_length must be >= 2");
  }
  if (!(peak_lr >= 0.0)) throw ConfigError("train: peak_lr must be >= 0");
  if (ema_window == 0) throw ConfigError("train: ema_window must be >= 1");
}

std::size_t TrainExample::scored() const {
  std::size_t n = 0;
  for (std::size_t t = 1; t < mask.size(); ++t) n += mask[t] != 0;
  return n;
}

std::vector<double> LossTrace::raw() const {
  std::vector<double> out;
  out.reserve(steps.size());
  for (const auto& s : steps) out.push_back(s.raw_loss);
  return out;
}

TokenSeq join_documents(std::span<const TokenSeq> docs) {
  TokenSeq out;
  for (const auto& d : docs) {
    out.insert(out.end(), d.begin(), d.end());
    out.push_back(Vocab::kEos);
  }
  return out;
}

std::vector<TokenSeq> pack_corpus(std::span<const TokenId> stream, std::size_t context_length) {
  if (stream.empty()) throw InputError("pack: empty token stream");
  if (context_length == 0) throw ConfigError("pack: context_length must be positive");
  std::vector<TokenSeq> blocks;
  for (std::size_t off = 0; off + context_length <= stream.size(); off += context_length) {
    blocks.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(off),
                        stream.begin() + static_cast<std::ptrdiff_t>(off + context_length));
  }
  return blocks;
}

TrainExample lm_example(TokenSeq block) {
  TrainExample ex;
  ex.mask.assign(block.size(), 1);
  if (!ex.mask.empty()) ex.mask[0] = 0;
  ex.tokens = std::move(block);
  return ex;
}

TrainExample sft_example(std::span<const TokenId> prompt, std::span<const TokenId> response,
                         std::size_t max_prompt, std::size_t max_response) {
  if (response.empty()) throw InputError("sft: empty response");
  std::span<const TokenId> body = response;
  if (body.back() == Vocab::kEos) body = body.first(body.size() - 1);
  const std::size_t keep_prompt = std::min(prompt.size(), max_prompt);
  const std::size_t keep_body = std::min(body.size(), max_response == 0 ? 0 : max_response - 1);
  if (keep_prompt == 0 || max_response == 0) {
    throw InputError("sft: prompt or response is empty after truncation");
  }
  TrainExample ex;
  ex.tokens.assign(prompt.end() - static_cast<std::ptrdiff_t>(keep_prompt), prompt.end());
  ex.tokens.insert(ex.tokens.end(), body.begin(),
                   body.begin() + static_cast<std::ptrdiff_t>(keep_body));
  ex.tokens.push_back(Vocab::kEos);
  ex.mask.assign(ex.tokens.size(), 0);
  std::fill(ex.mask.begin() + static_cast<std::ptrdiff_t>(keep_prompt), ex.mask.end(), 1);
  return ex;
}

std::vector<double> ema(std::span<const double> raw, std::size_t window) {
  if (window == 0) throw ContractError("ema: window must be >= 1");
  const double lambda = 1.0 - 2.0 / (static_cast<double>(window) + 1.0);
  std::vector<double> out(raw.size());
  bool started = false;
  double y = 0.0;
  for (std::size_t t = 0; t < raw.size(); ++t) {
    if (std::isfinite(raw[t])) {
      y = started ? lambda * y + (1.0 - lambda) * raw[t] : raw[t];
      started = true;
    }
    out[t] = started ? y : raw[t];
  }
  return out;
}

std::vector<SpikeEvent> detect_spikes(std::span<const double> raw, std::span<const double> smoothed,
                                      double rise_threshold, std::size_t window) {
  if (!(rise_threshold > 0.0) || window == 0) {
    throw ContractError("spikes: threshold and window must be positive");
  }
  if (raw.size() != smoothed.size()) throw DimensionError("spikes: series lengths differ");
  std::vector<SpikeEvent> events;
  bool armed = true;
  for (std::size_t t = 0; t < raw.size(); ++t) {
    if (!std::isfinite(raw[t])) {
      events.push_back({t, 0.0, true});
      continue;
    }
    if (t == 0) continue;
    const std::size_t lo = t > window ? t - window : 0;
    double lowest = smoothed[lo];
    for (std::size_t i = lo; i < t; ++i) lowest = std::min(lowest, smoothed[i]);
    const double rise = smoothed[t] - lowest;
    if (rise >= rise_threshold) {
      if (armed) events.push_back({t, rise, false});
      armed = false;
    } else {
      armed = true;
    }
  }
  return events;
}

std::vector<SpikeEvent> detect_spikes(const LossTrace& trace, double rise_threshold,
                                      std::size_t window) {
  return detect_spikes(trace.raw(), trace.ema, rise_threshold, window);
}

Tensor example_nll(const Policy& policy, const TrainExample& ex, const ForwardOptions& opts) {
  if (ex.tokens.size() != ex.mask.size()) throw DimensionError("example: mask length mismatch");
  std::vector<std::size_t> positions;
  for (std::size_t t = 1; t < ex.tokens.size(); ++t) {
    if (ex.mask[t]) positions.push_back(t);
  }
  if (positions.empty()) return Tensor::scalar(0.0);
  // One forward over the contiguous span that covers every scored position.
  const std::size_t begin = positions.front(), end = positions.back() + 1;
  const Tensor logits = policy.model().logits(ex.tokens, begin, end, opts);
  const Tensor lp = log_softmax(logits);
  std::vector<TokenId> targets(ex.tokens.begin() + static_cast<std::ptrdiff_t>(begin),
                               ex.tokens.begin() + static_cast<std::ptrdiff_t>(end));
  std::vector<double> weights(end - begin, 0.0);
  for (auto t : positions) weights[t - begin] = -1.0;
  return weighted_sum(pick(lp, targets), weights);
}

LossTrace train_ce(Policy& policy, std::span<const TrainExample> data, const TrainRunConfig& cfg,
                   const EpochCallback& on_epoch) {
  cfg.validate();
  if (data.empty()) throw InputError("train: no training examples");
  if (policy.frozen()) throw ContractError("train: cannot train a frozen policy");

  // Without prompt masking every position after the first is scored.
  std::vector<TrainExample> unmasked;
  std::span<const TrainExample> examples = data;
  if (cfg.stage == Stage::kSft && !cfg.prompt_mask) {
    for (const auto& ex : data) {
      TrainExample copy = ex;
      std::fill(copy.mask.begin(), copy.mask.end(), 1);
      if (!copy.mask.empty()) copy.mask[0] = 0;
      unmasked.push_back(std::move(copy));
    }
    examples = unmasked;
  }

  const std::size_t group = cfg.batch_size * cfg.grad_accum_steps;
  const std::size_t steps_per_epoch = (examples.size() + group - 1) / group;
  LrSchedule schedule{cfg.peak_lr, cfg.warmup_steps,
                      cfg.total_steps ? cfg.total_steps : steps_per_epoch * cfg.epochs};
  schedule.validate();

  AdamWState hyper;
  hyper.weight_decay = cfg.weight_decay;
  AdamW opt(policy.trainable_parameters(), hyper);
  opt.zero_grad();

  LossTrace trace;
  trace.ema_window = cfg.ema_window;
  std::size_t step = 0, tokens_seen = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs && step < schedule.total_steps; ++epoch) {
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffler(derive_seed(cfg.seed, {0x5bff, epoch}));
    shuffler.shuffle(std::span<std::size_t>(order));

    double epoch_nll = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size() && step < schedule.total_steps;
         start += group, ++step) {
      const std::size_t stop = std::min(start + group, order.size());
      std::size_t step_tokens = 0;
      for (std::size_t i = start; i < stop; ++i) step_tokens += examples[order[i]].scored();
      if (step_tokens == 0) continue;

      double step_nll = 0.0;
      for (std::size_t i = start; i < stop; ++i) {
        Rng dropout(derive_seed(cfg.seed, {0xd209, step, i - start}));
        const ForwardOptions opts{true, &dropout};
        Tensor nll = example_nll(policy, examples[order[i]], opts);
        step_nll += nll.item();
        if (nll.requires_grad()) {
          scale(nll, 1.0 / static_cast<double>(step_tokens)).backward();
        }
      }
      const double lr = lr_at(schedule, step);
      const double raw = step_nll / static_cast<double>(step_tokens);
      StepRecord rec{step, tokens_seen + step_tokens, raw, lr, false};
      if (!std::isfinite(raw)) {
        rec.skipped = true;
        trace.skipped.push_back(fmt::format("non-finite loss at step {}", step));
      } else {
        const auto outcome = opt.step(lr);
        if (!outcome.applied) {
          rec.skipped = true;
          trace.skipped.push_back(outcome.diagnostic);
        }
        epoch_nll += step_nll;
        epoch_tokens += step_tokens;
      }
      opt.zero_grad();
      tokens_seen += step_tokens;
      trace.steps.push_back(rec);
    }
    trace.epoch_mean_loss.push_back(epoch_tokens ? epoch_nll / static_cast<double>(epoch_tokens)
                                                 : std::nan(""));
    if (on_epoch) on_epoch(epoch + 1, policy, RngCursor{cfg.seed, step, epoch + 1});
  }

  const auto raw = trace.raw();
  trace.ema = ema(raw, cfg.ema_window);
  trace.spikes = detect_spikes(raw, trace.ema, cfg.spike_threshold,
                               std::max<std::size_t>(cfg.spike_window, 1));
  return trace;
}

void write_loss_csv(const std::filesystem::path& path, const LossTrace& trace) {
  auto out = fmt::output_file(path.string());
  out.print("step,tokens,raw,ema,lr\n");
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    const auto& s = trace.steps[i];
    out.print("{},{},{:.10g},{:.10g},{:.10g}\n", s.step, s.tokens_seen, s.raw_loss,
              i < trace.ema.size() ? trace.ema[i] : s.raw_loss, s.lr);
  }
}

}  // namespace notecraft
