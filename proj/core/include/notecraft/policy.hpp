// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "notecraft/rng.hpp"
#include "notecraft/tensor.hpp"
#include "notecraft/vocab.hpp"

namespace notecraft {

enum class ModelKind : std::uint32_t { kTabular = 0, kTinyLm = 1 };

struct ForwardOptions {
  // Enables adapter dropout; requires `dropout_rng`.
  bool train = false;
  Rng* dropout_rng = nullptr;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Autoregressive categorical distribution over a token vocabulary.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual ModelKind kind() const = 0;
  virtual std::size_t vocab_size() const = 0;

  // Logits [T×V]; row t-begin predicts seq[t] from seq[0..t), t in [begin, end).
  virtual Tensor logits(std::span<const TokenId> seq, std::size_t begin, std::size_t end,
                        const ForwardOptions& opts = {}) const = 0;

  // Every tensor, base weights first, then adapter matrices.
  virtual std::vector<NamedTensor> named_tensors() const = 0;
  virtual std::vector<Tensor> trainable_parameters() const = 0;
  virtual std::unique_ptr<LanguageModel> clone() const = 0;
};

// Bigram table: the row of the previous token holds the next-token logits.
// Position 0 conditions on BOS.
class TabularPolicy final : public LanguageModel {
 public:
  explicit TabularPolicy(Tensor table);
  static TabularPolicy uniform(std::size_t vocab);
  static TabularPolicy random(std::size_t vocab, std::uint64_t seed, double spread = 1.0);

  ModelKind kind() const override { return ModelKind::kTabular; }
  std::size_t vocab_size() const override { return table_.dim(0); }
  Tensor logits(std::span<const TokenId> seq, std::size_t begin, std::size_t end,
                const ForwardOptions& opts = {}) const override;
  std::vector<NamedTensor> named_tensors() const override { return {{"table", table_}}; }
  std::vector<Tensor> trainable_parameters() const override;
  std::unique_ptr<LanguageModel> clone() const override;

  const Tensor& table() const { return table_; }

 private:
  Tensor table_;
};

struct TinyLmDims {
  std::size_t vocab = 32;
  std::size_t context = 8;
  std::size_t embed = 16;
  std::size_t hidden = 64;

  bool operator==(const TinyLmDims&) const = default;
};

enum class LoraTarget : std::uint32_t { kW1 = 0, kW2 = 1 };

// Low-rank delta for a base matrix W0[in×out]: the adapted layer computes
// x·W0 + (alpha/rank)·x·Aᵀ·Bᵀ with A[rank×in] and B[out×rank], i.e.
// ΔW = B·A in the column-vector convention.
struct LoraAdapter {
  LoraTarget target = LoraTarget::kW1;
  std::size_t rank = 8;
  double alpha = 32.0;
  double dropout = 0.05;
  Tensor a;
  Tensor b;

  double scale() const { return alpha / static_cast<double>(rank); }
  std::size_t parameter_count() const { return a.numel() + b.numel(); }
};

// Windowed MLP language model: the last `context` tokens (left-padded with
// PAD) are embedded, concatenated, passed through one tanh hidden layer and
// projected to vocabulary logits.
class TinyLm final : public LanguageModel {
 public:
  TinyLm(TinyLmDims dims, std::uint64_t seed);
  TinyLm(TinyLmDims dims, Tensor embed, Tensor w1, Tensor b1, Tensor w2, Tensor b2);

  ModelKind kind() const override { return ModelKind::kTinyLm; }
  std::size_t vocab_size() const override { return dims_.vocab; }
  Tensor logits(std::span<const TokenId> seq, std::size_t begin, std::size_t end,
                const ForwardOptions& opts = {}) const override;
  std::vector<NamedTensor> named_tensors() const override;
  std::vector<Tensor> trainable_parameters() const override;
  std::unique_ptr<LanguageModel> clone() const override;

  const TinyLmDims& dims() const { return dims_; }
  const Tensor& embed() const { return embed_; }
  const Tensor& w1() const { return w1_; }
  const Tensor& b1() const { return b1_; }
  const Tensor& w2() const { return w2_; }
  const Tensor& b2() const { return b2_; }
  const Tensor& base_matrix(LoraTarget target) const;

  bool has_adapters() const;
  const std::optional<LoraAdapter>& adapter(LoraTarget target) const;
  void set_adapter(LoraAdapter adapter);
  void clear_adapters();
  void set_base_trainable(bool flag);
  // Folds every adapter into its base matrix and removes the adapters.
  void merge_adapters();

 private:
  Tensor linear(const Tensor& x, const Tensor& w, const std::optional<LoraAdapter>& adapter,
                const ForwardOptions& opts) const;

  TinyLmDims dims_;
  Tensor embed_, w1_, b1_, w2_, b2_;
  std::array<std::optional<LoraAdapter>, 2> adapters_;
};

// Value-like handle around a model. Copies are deep. A frozen handle exposes
// no trainable parameters and its tensors never record gradients.
class Policy {
 public:
  Policy() = default;
  explicit Policy(std::unique_ptr<LanguageModel> model, bool frozen = false);
  Policy(const Policy& other);
  Policy& operator=(const Policy& other);
  Policy(Policy&&) noexcept = default;
  Policy& operator=(Policy&&) noexcept = default;

  bool empty() const { return model_ == nullptr; }
  bool frozen() const { return frozen_; }
  const LanguageModel& model() const;
  LanguageModel& mutable_model();
  std::size_t vocab_size() const { return model().vocab_size(); }
  std::vector<Tensor> trainable_parameters() const;
  std::size_t trainable_parameter_count() const;
  std::size_t parameter_count() const;

 private:
  std::unique_ptr<LanguageModel> model_;
  bool frozen_ = false;
};

Policy make_tabular(TabularPolicy model);
Policy make_tiny_lm(TinyLmDims dims, std::uint64_t seed);

// Deep frozen copy.
Policy snapshot(const Policy& policy);

// Deep trainable copy: adapters train when attached, otherwise every base
// tensor does.
Policy thaw(const Policy& policy);

struct LoraConfig {
  std::size_t rank = 8;
  double alpha = 32.0;
  double dropout = 0.05;
  std::vector<LoraTarget> targets = {LoraTarget::kW1, LoraTarget::kW2};
};

// New handle with adapters on the requested matrices: A ~ U(-a, a) with
// a = 1/sqrt(in), B = 0. Base weights stop requiring gradients.
Policy attach_lora(const Policy& policy, const LoraConfig& config, std::uint64_t init_seed);

// Consumes the adapted handle; returns an adapter-free policy whose base
// matrices are W0 + (alpha/r)·(B·A)ᵀ. Throws ContractError when no adapter
// is attached.
Policy merge_lora(Policy&& policy);

// Σ_t log P(response[t] | prompt ++ response[0..t)). Requires a non-empty,
// EOS-terminated response.
double log_prob(const Policy& policy, std::span<const TokenId> prompt,
                std::span<const TokenId> response);

// Differentiable form of log_prob without the EOS requirement.
Tensor sequence_log_prob(const Policy& policy, std::span<const TokenId> prompt,
                         std::span<const TokenId> continuation, const ForwardOptions& opts = {});

// Log-probabilities of the next token after `context`.
std::vector<double> next_token_log_probs(const Policy& policy, std::span<const TokenId> context);

// Raw logits of the next token after `context`.
std::vector<double> next_token_logits(const Policy& policy, std::span<const TokenId> context);

}  // namespace notecraft
