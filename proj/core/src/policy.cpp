// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/policy.hpp"

#include <cmath>

#include <fmt/format.h>

#include "notecraft/errors.hpp"

namespace notecraft {

namespace {

void check_range(std::span<const TokenId> seq, std::size_t begin, std::size_t end) {
  if (begin > end || end > seq.size() + 1) {
    throw ContractError(fmt::format("logits: positions [{}, {}) invalid for a sequence of {}",
                                    begin, end, seq.size()));
  }
}

void check_tokens(std::span<const TokenId> seq, std::size_t limit, std::size_t vocab) {
  for (std::size_t i = 0; i < limit && i < seq.size(); ++i) {
    if (seq[i] < 0 || static_cast<std::size_t>(seq[i]) >= vocab) {
      throw InputError(fmt::format("unknown token id {} at position {} (vocab {})", seq[i], i,
                                   vocab));
    }
  }
}

Tensor uniform_tensor(Shape shape, double bound, Rng& rng) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v), true);
}

}  // namespace

// ---- TabularPolicy -----------------------------------------------------------

TabularPolicy::TabularPolicy(Tensor table) : table_(std::move(table)) {
  if (table_.rank() != 2 || table_.dim(0) != table_.dim(1)) {
    throw DimensionError("tabular policy: table must be square [V×V]");
  }
}

TabularPolicy TabularPolicy::uniform(std::size_t vocab) {
  return TabularPolicy(Tensor::zeros({vocab, vocab}, true));
}

TabularPolicy TabularPolicy::random(std::size_t vocab, std::uint64_t seed, double spread) {
  Rng rng(seed);
  return TabularPolicy(uniform_tensor({vocab, vocab}, spread, rng));
}

Tensor TabularPolicy::logits(std::span<const TokenId> seq, std::size_t begin,
                             std::size_t end, const ForwardOptions&) const {
  check_range(seq, begin, end);
  check_tokens(seq, end == 0 ? 0 : end - 1, vocab_size());
  std::vector<TokenId> prev;
  prev.reserve(end - begin);
  for (std::size_t t = begin; t < end; ++t) prev.push_back(t == 0 ? Vocab::kBos : seq[t - 1]);
  return gather_rows(table_, prev);
}

std::vector<Tensor> TabularPolicy::trainable_parameters() const {
  if (table_.requires_grad()) return {table_};
  return {};
}

std::unique_ptr<LanguageModel> TabularPolicy::clone() const {
  return std::make_unique<TabularPolicy>(table_.clone());
}

// ---- TinyLm ------------------------------------------------------------------

TinyLm::TinyLm(TinyLmDims dims, std::uint64_t seed) : dims_(dims) {
  if (dims.vocab < Vocab::kNumSpecial || dims.context == 0 || dims.embed == 0 ||
      dims.hidden == 0) {
    throw ConfigError("tiny lm: all dimensions must be positive and vocab must hold the specials");
  }
  Rng rng(derive_seed(seed, {0x7e11}));
  const std::size_t in = dims.context * dims.embed;
  embed_ = uniform_tensor({dims.vocab, dims.embed}, 0.5, rng);
  w1_ = uniform_tensor({in, dims.hidden}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  b1_ = Tensor::zeros({dims.hidden}, true);
  w2_ = uniform_tensor({dims.hidden, dims.vocab},
                       1.0 / std::sqrt(static_cast<double>(dims.hidden)), rng);
  b2_ = Tensor::zeros({dims.vocab}, true);
}

TinyLm::TinyLm(TinyLmDims dims, Tensor embed, Tensor w1, Tensor b1, Tensor w2, Tensor b2)
    : dims_(dims),
      embed_(std::move(embed)),
      w1_(std::move(w1)),
      b1_(std::move(b1)),
      w2_(std::move(w2)),
      b2_(std::move(b2)) {
  const std::size_t in = dims.context * dims.embed;
  if (embed_.shape() != Shape{dims.vocab, dims.embed} || w1_.shape() != Shape{in, dims.hidden} ||
      b1_.shape() != Shape{dims.hidden} || w2_.shape() != Shape{dims.hidden, dims.vocab} ||
      b2_.shape() != Shape{dims.vocab}) {
    throw DimensionError("tiny lm: tensor shapes do not match the dimensions");
  }
}

const Tensor& TinyLm::base_matrix(LoraTarget target) const {
  return target == LoraTarget::kW1 ? w1_ : w2_;
}

bool TinyLm::has_adapters() const { return adapters_[0].has_value() || adapters_[1].has_value(); }

const std::optional<LoraAdapter>& TinyLm::adapter(LoraTarget target) const {
  return adapters_[static_cast<std::size_t>(target)];
}

void TinyLm::set_adapter(LoraAdapter adapter) {
  const Tensor& w = base_matrix(adapter.target);
  if (adapter.a.shape() != Shape{adapter.rank, w.dim(0)} ||
      adapter.b.shape() != Shape{w.dim(1), adapter.rank}) {
    throw DimensionError("lora: adapter shapes do not match the target matrix");
  }
  adapters_[static_cast<std::size_t>(adapter.target)] = std::move(adapter);
}

void TinyLm::clear_adapters() { adapters_ = {}; }

void TinyLm::set_base_trainable(bool flag) {
  for (Tensor* t : {&embed_, &w1_, &b1_, &w2_, &b2_}) t->set_requires_grad(flag);
}

void TinyLm::merge_adapters() {
  NoGradGuard guard;
  for (auto& slot : adapters_) {
    if (!slot) continue;
    Tensor& w = slot->target == LoraTarget::kW1 ? w1_ : w2_;
    const Tensor delta = transpose(matmul(slot->b, slot->a));  // [in×out]
    auto values = w.mutable_values();
    const auto d = delta.values();
    const double s = slot->scale();
    for (std::size_t i = 0; i < values.size(); ++i) values[i] += s * d[i];
    slot.reset();
  }
}

Tensor TinyLm::linear(const Tensor& x, const Tensor& w, const std::optional<LoraAdapter>& adapter,
                      const ForwardOptions& opts) const {
  Tensor y = matmul(x, w);
  if (!adapter) return y;
  Tensor input = x;
  if (opts.train && adapter->dropout > 0.0) {
    if (opts.dropout_rng == nullptr) throw ContractError("lora: training forward needs an rng");
    const double keep = 1.0 - adapter->dropout;
    std::vector<double> mask(x.numel());
    for (auto& m : mask) m = opts.dropout_rng->bernoulli(keep) ? 1.0 / keep : 0.0;
    input = mul_constant(x, mask);
  }
  Tensor low = matmul(matmul(input, transpose(adapter->a)), transpose(adapter->b));
  return add(y, scale(low, adapter->scale()));
}

Tensor TinyLm::logits(std::span<const TokenId> seq, std::size_t begin, std::size_t end,
                      const ForwardOptions& opts) const {
  check_range(seq, begin, end);
  check_tokens(seq, end == 0 ? 0 : end - 1, dims_.vocab);
  const std::size_t k = dims_.context;
  std::vector<TokenId> idx;
  idx.reserve((end - begin) * k);
  for (std::size_t t = begin; t < end; ++t) {
    for (std::size_t j = 0; j < k; ++j) {
      const auto pos = static_cast<std::ptrdiff_t>(t) - static_cast<std::ptrdiff_t>(k - j);
      idx.push_back(pos < 0 ? Vocab::kPad : seq[static_cast<std::size_t>(pos)]);
    }
  }
  Tensor x = gather_windows(embed_, idx, k);
  Tensor h = tanh(add_row(linear(x, w1_, adapters_[0], opts), b1_));
  return add_row(linear(h, w2_, adapters_[1], opts), b2_);
}

std::vector<NamedTensor> TinyLm::named_tensors() const {
  std::vector<NamedTensor> out = {
      {"embed", embed_}, {"w1", w1_}, {"b1", b1_}, {"w2", w2_}, {"b2", b2_}};
  for (const auto& slot : adapters_) {
    if (!slot) continue;
    const char* tag = slot->target == LoraTarget::kW1 ? "w1" : "w2";
    out.push_back({fmt::format("lora.{}.a", tag), slot->a});
    out.push_back({fmt::format("lora.{}.b", tag), slot->b});
  }
  return out;
}

std::vector<Tensor> TinyLm::trainable_parameters() const {
  std::vector<Tensor> out;
  for (const auto& nt : named_tensors()) {
    if (nt.tensor.requires_grad()) out.push_back(nt.tensor);
  }
  return out;
}

std::unique_ptr<LanguageModel> TinyLm::clone() const {
  auto copy = std::make_unique<TinyLm>(dims_, embed_.clone(), w1_.clone(), b1_.clone(),
                                       w2_.clone(), b2_.clone());
  for (const auto& slot : adapters_) {
    if (!slot) continue;
    LoraAdapter a = *slot;
    a.a = slot->a.clone();
    a.b = slot->b.clone();
    copy->set_adapter(std::move(a));
  }
  return copy;
}

// ---- Policy --------------------------------------------------------------------

Policy::Policy(std::unique_ptr<LanguageModel> model, bool frozen)
    : model_(std::move(model)), frozen_(frozen) {
  if (frozen_ && model_) {
    for (auto& nt : model_->named_tensors()) nt.tensor.set_requires_grad(false);
  }
}

Policy::Policy(const Policy& other)
    : model_(other.model_ ? other.model_->clone() : nullptr), frozen_(other.frozen_) {}

Policy& Policy::operator=(const Policy& other) {
  if (this != &other) {
    model_ = other.model_ ? other.model_->clone() : nullptr;
    frozen_ = other.frozen_;
  }
  return *this;
}

const LanguageModel& Policy::model() const {
  if (!model_) throw ContractError("policy: empty handle");
  return *model_;
}

LanguageModel& Policy::mutable_model() {
  if (!model_) throw ContractError("policy: empty handle");
  if (frozen_) throw ContractError("policy: frozen handles cannot be modified");
  return *model_;
}

std::vector<Tensor> Policy::trainable_parameters() const {
  if (frozen_) return {};
  return model().trainable_parameters();
}

std::size_t Policy::trainable_parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : trainable_parameters()) n += t.numel();
  return n;
}

std::size_t Policy::parameter_count() const {
  std::size_t n = 0;
  for (const auto& nt : model().named_tensors()) n += nt.tensor.numel();
  return n;
}

Policy make_tabular(TabularPolicy model) {
  return Policy(std::make_unique<TabularPolicy>(std::move(model)));
}

Policy make_tiny_lm(TinyLmDims dims, std::uint64_t seed) {
  return Policy(std::make_unique<TinyLm>(dims, seed));
}

Policy snapshot(const Policy& policy) { return Policy(policy.model().clone(), true); }

Policy thaw(const Policy& policy) {
  auto model = policy.model().clone();
  if (auto* lm = dynamic_cast<TinyLm*>(model.get()); lm != nullptr && lm->has_adapters()) {
    lm->set_base_trainable(false);
    for (auto target : {LoraTarget::kW1, LoraTarget::kW2}) {
      if (const auto& slot = lm->adapter(target)) {
        Tensor a = slot->a, b = slot->b;
        a.set_requires_grad(true);
        b.set_requires_grad(true);
      }
    }
  } else {
    for (auto& nt : model->named_tensors()) nt.tensor.set_requires_grad(true);
  }
  return Policy(std::move(model));
}

Policy attach_lora(const Policy& policy, const LoraConfig& config, std::uint64_t init_seed) {
  const auto* base = dynamic_cast<const TinyLm*>(&policy.model());
  if (base == nullptr) throw ConfigError("lora: only the tiny LM has adaptable matrices");
  if (config.rank == 0) throw ConfigError("lora: rank must be positive");
  if (config.dropout < 0.0 || config.dropout >= 1.0) {
    throw ConfigError("lora: dropout must lie in [0, 1)");
  }
  auto model = base->clone();
  auto& lm = static_cast<TinyLm&>(*model);
  for (auto target : config.targets) {
    const Tensor& w = lm.base_matrix(target);
    const std::size_t in = w.dim(0), out = w.dim(1);
    if (config.rank >= std::min(in, out)) {
      throw ConfigError(fmt::format("lora: rank {} must be below min({}, {})", config.rank, in,
                                    out));
    }
    if (lm.adapter(target)) throw ContractError("lora: target already has an adapter");
    Rng rng(derive_seed(init_seed, {static_cast<std::uint64_t>(target)}));
    LoraAdapter adapter;
    adapter.target = target;
    adapter.rank = config.rank;
    adapter.alpha = config.alpha;
    adapter.dropout = config.dropout;
    adapter.a = uniform_tensor({config.rank, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
    adapter.b = Tensor::zeros({out, config.rank}, true);
    lm.set_adapter(std::move(adapter));
  }
  lm.set_base_trainable(false);
  return Policy(std::move(model));
}

Policy merge_lora(Policy&& policy) {
  auto* lm = dynamic_cast<TinyLm*>(&policy.mutable_model());
  if (lm == nullptr || !lm->has_adapters()) {
    throw ContractError("lora: merge requires an attached adapter");
  }
  Policy merged(std::move(policy));
  auto& target = static_cast<TinyLm&>(merged.mutable_model());
  target.merge_adapters();
  target.set_base_trainable(true);
  return merged;
}

Tensor sequence_log_prob(const Policy& policy, std::span<const TokenId> prompt,
                         std::span<const TokenId> continuation, const ForwardOptions& opts) {
  const std::size_t vocab = policy.vocab_size();
  check_tokens(prompt, prompt.size(), vocab);
  check_tokens(continuation, continuation.size(), vocab);
  TokenSeq seq(prompt.begin(), prompt.end());
  seq.insert(seq.end(), continuation.begin(), continuation.end());
  const Tensor logits = policy.model().logits(seq, prompt.size(), seq.size(), opts);
  return sum(pick(log_softmax(logits), continuation));
}

double log_prob(const Policy& policy, std::span<const TokenId> prompt,
                std::span<const TokenId> response) {
  if (response.empty() || response.back() != Vocab::kEos) {
    throw InputError("log_prob: response must be non-empty and EOS-terminated");
  }
  NoGradGuard guard;
  return sequence_log_prob(policy, prompt, response).item();
}

std::vector<double> next_token_logits(const Policy& policy, std::span<const TokenId> context) {
  NoGradGuard guard;
  const Tensor logits = policy.model().logits(context, context.size(), context.size() + 1);
  return {logits.values().begin(), logits.values().end()};
}

std::vector<double> next_token_log_probs(const Policy& policy, std::span<const TokenId> context) {
  NoGradGuard guard;
  const Tensor logits = policy.model().logits(context, context.size(), context.size() + 1);
  const Tensor lp = log_softmax(logits);
  return {lp.values().begin(), lp.values().end()};
}

}  // namespace notecraft
