// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/preference.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <fmt/os.h>

#include "notecraft/errors.hpp"
#include "notecraft/rng.hpp"
#include "notecraft/serialize.hpp"

namespace notecraft {

void PreferenceRecord::validate() const {
  if (preferred.empty() || preferred.back() != Vocab::kEos || rejected.empty() ||
      rejected.back() != Vocab::kEos) {
    throw InputError(fmt::format("record {}: sequences must be EOS-terminated", case_id));
  }
  if (preferred == rejected) {
    throw InputError(fmt::format("record {}: preferred equals rejected", case_id));
  }
}

std::string PreferenceRecord::source_tag() const {
  switch (source) {
    case RecordSource::kTeacher: return "teacher";
    case RecordSource::kPolicyRound: return fmt::format("policy-round-{}", round);
    case RecordSource::kHuman: return "human";
    case RecordSource::kSimulatedHuman: return "simulated-human";
  }
  return "?";
}

void DpoConfig::validate() const {
  if (!(beta > 0.0)) throw ConfigError("dpo: beta must be > 0");
  if (!(lr >= 0.0)) throw ConfigError("dpo: lr must be >= 0");
  if (grad_accum == 0) throw ConfigError("dpo: grad_accum must be positive");
}

double dpo_loss_from_margin(double m) {
  return m >= 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

namespace {

void require_frozen(const Policy& reference) {
  if (!reference.frozen()) throw ContractError("dpo: reference policy must be frozen");
}

struct ReferenceTerms {
  double preferred = 0.0;
  double rejected = 0.0;
};

ReferenceTerms reference_terms(const Policy& reference, const PreferenceRecord& r) {
  return {log_prob(reference, r.prompt, r.preferred), log_prob(reference, r.prompt, r.rejected)};
}

}  // namespace

DpoTerms dpo_loss(const Policy& policy, const Policy& reference, const PreferenceRecord& record,
                  double beta) {
  require_frozen(reference);
  const auto ref = reference_terms(reference, record);
  const double delta_pos = log_prob(policy, record.prompt, record.preferred) - ref.preferred;
  const double delta_neg = log_prob(policy, record.prompt, record.rejected) - ref.rejected;
  const double margin = beta * (delta_pos - delta_neg);
  return {dpo_loss_from_margin(margin), margin};
}

DpoGraph dpo_loss_graph(const Policy& policy, const PreferenceRecord& record, double ref_preferred,
                        double ref_rejected, double beta, const ForwardOptions& opts) {
  Tensor pos = sequence_log_prob(policy, record.prompt, record.preferred, opts);
  Tensor neg_lp = sequence_log_prob(policy, record.prompt, record.rejected, opts);
  Tensor margin = scale(sub(sub(pos, neg_lp), Tensor::scalar(ref_preferred - ref_rejected)), beta);
  return {neg(log_sigmoid(margin)), margin.item()};
}

double preference_accuracy(const Policy& policy, const Policy& reference,
                           std::span<const PreferenceRecord> records, double beta) {
  if (records.empty()) return 0.0;
  std::size_t wins = 0;
  for (const auto& r : records) wins += dpo_loss(policy, reference, r, beta).margin > 0.0;
  return static_cast<double>(wins) / static_cast<double>(records.size());
}

DpoResult train_dpo(Policy& policy, const Policy& reference,
                    std::span<const PreferenceRecord> records, const DpoConfig& cfg,
                    const EpochCallback& on_epoch) {
  cfg.validate();
  require_frozen(reference);
  if (records.empty()) throw InputError("dpo: no preference records");
  if (policy.frozen()) throw ContractError("dpo: cannot train a frozen policy");
  for (const auto& r : records) r.validate();

  // The reference is frozen, so its log-probabilities are computed once.
  std::vector<ReferenceTerms> ref;
  ref.reserve(records.size());
  for (const auto& r : records) ref.push_back(reference_terms(reference, r));

  auto evaluate = [&](std::size_t epoch) {
    DpoEpochDiagnostics d;
    d.epoch = epoch;
    std::size_t wins = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      const double m = cfg.beta * ((log_prob(policy, r.prompt, r.preferred) - ref[i].preferred) -
                                   (log_prob(policy, r.prompt, r.rejected) - ref[i].rejected));
      wins += m > 0.0;
      d.mean_margin += m;
      d.mean_loss += dpo_loss_from_margin(m);
    }
    const auto n = static_cast<double>(records.size());
    d.accuracy = static_cast<double>(wins) / n;
    d.mean_margin /= n;
    d.mean_loss /= n;
    return d;
  };

  const std::size_t steps_per_epoch = (records.size() + cfg.grad_accum - 1) / cfg.grad_accum;
  const LrSchedule schedule{cfg.lr, cfg.warmup_steps,
                            std::max<std::size_t>(1, steps_per_epoch * cfg.epochs_per_round)};
  schedule.validate();

  AdamW opt(policy.trainable_parameters());
  opt.zero_grad();
  DpoResult result;
  result.trace.ema_window = 25;
  result.epochs.push_back(evaluate(0));

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs_per_round; ++epoch) {
    std::vector<std::size_t> order(records.size());
    std::iota(order.begin(), order.end(), 0);
    Rng shuffler(derive_seed(cfg.seed, {0xd90, epoch}));
    shuffler.shuffle(std::span<std::size_t>(order));

    for (std::size_t start = 0; start < order.size(); start += cfg.grad_accum, ++step) {
      const std::size_t stop = std::min(start + cfg.grad_accum, order.size());
      const double inv = 1.0 / static_cast<double>(stop - start);
      DpoStepDiagnostics sd;
      sd.step = step;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& r = records[order[i]];
        const auto& rt = ref[order[i]];
        Rng dropout(derive_seed(cfg.seed, {0xd209, step, i - start}));
        const ForwardOptions opts{true, &dropout};
        auto [loss, m] = dpo_loss_graph(policy, r, rt.preferred, rt.rejected, cfg.beta, opts);
        sd.loss += loss.item() * inv;
        sd.margin += m * inv;
        sd.accuracy += (m > 0.0 ? 1.0 : 0.0) * inv;
        if (loss.requires_grad()) scale(loss, inv).backward();
      }
      sd.lr = lr_at(schedule, step);
      StepRecord rec{step, stop - start, sd.loss, sd.lr, false};
      if (!std::isfinite(sd.loss)) {
        rec.skipped = true;
        result.trace.skipped.push_back(fmt::format("non-finite DPO loss at step {}", step));
      } else if (auto outcome = opt.step(sd.lr); !outcome.applied) {
        rec.skipped = true;
        result.trace.skipped.push_back(outcome.diagnostic);
      }
      opt.zero_grad();
      if (!result.trace.steps.empty()) rec.tokens_seen += result.trace.steps.back().tokens_seen;
      result.trace.steps.push_back(rec);
      result.steps.push_back(sd);
    }
    result.epochs.push_back(evaluate(epoch + 1));
    if (on_epoch) on_epoch(epoch + 1, policy, RngCursor{cfg.seed, step, epoch + 1});
  }
  const auto raw = result.trace.raw();
  result.trace.ema = ema(raw, result.trace.ema_window);
  result.trace.spikes = detect_spikes(raw, result.trace.ema, 0.5, 10);
  return result;
}

void append_records(const std::filesystem::path& path, std::span<const PreferenceRecord> records) {
  std::ofstream out(path, std::ios::app);
  if (!out) throw Error("io", fmt::format("cannot append to {}", path.string()));
  for (const auto& r : records) out << nlohmann::json(r).dump() << '\n';
  out.flush();
  if (!out) throw Error("io", fmt::format("write to {} failed", path.string()));
}

std::vector<PreferenceRecord> load_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError(fmt::format("preference store {} not found", path.string()));
  std::vector<PreferenceRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(nlohmann::json::parse(line).get<PreferenceRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return out;
}

void write_dpo_diagnostics_csv(const std::filesystem::path& path,
                               std::span<const DpoEpochDiagnostics> epochs) {
  auto out = fmt::output_file(path.string());
  out.print("epoch,accuracy,mean_margin,mean_loss\n");
  for (const auto& e : epochs) {
    out.print("{},{:.10g},{:.10g},{:.10g}\n", e.epoch, e.accuracy, e.mean_margin, e.mean_loss);
  }
}

}  // namespace notecraft
