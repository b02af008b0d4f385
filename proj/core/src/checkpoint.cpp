// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include <fmt/format.h>

#include "notecraft/errors.hpp"

namespace notecraft {

namespace {

constexpr char kMagic[4] = {'N', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T value) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  auto u = static_cast<std::make_unsigned_t<T>>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(u >> (8 * i));
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

void put_f64(std::ostream& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

template <typename T>
T get(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw FormatError("checkpoint: unexpected end of file");
  }
  std::make_unsigned_t<T> u = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) u |= static_cast<decltype(u)>(buf[i]) << (8 * i);
  return static_cast<T>(u);
}

double get_f64(std::istream& in) { return std::bit_cast<double>(get<std::uint64_t>(in)); }

void put_tensor(std::ostream& out, const Tensor& t) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put<std::uint64_t>(out, d);
  put<std::uint8_t>(out, t.requires_grad() ? 1 : 0);
  for (double v : t.values()) put_f64(out, v);
}

Tensor get_tensor(std::istream& in) {
  const auto rank = get<std::uint32_t>(in);
  if (rank > 4) throw FormatError("checkpoint: implausible tensor rank");
  Shape shape(rank);
  std::size_t n = 1;
  for (auto& d : shape) {
    d = get<std::uint64_t>(in);
    n *= d;
  }
  if (n > (std::size_t{1} << 28)) throw FormatError("checkpoint: implausible tensor size");
  const bool requires_grad = get<std::uint8_t>(in) != 0;
  std::vector<double> values(n);
  for (auto& v : values) v = get_f64(in);
  return Tensor(std::move(shape), std::move(values), requires_grad);
}

}  // namespace

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic, 4);
  put(out, kVersion);
  const auto& model = ckpt.policy.model();
  put(out, static_cast<std::uint32_t>(model.kind()));
  put<std::uint32_t>(out, ckpt.policy.frozen() ? 1 : 0);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.stage.size()));
  out.write(ckpt.stage.data(), static_cast<std::streamsize>(ckpt.stage.size()));
  put(out, ckpt.cursor.seed);
  put(out, ckpt.cursor.step);
  put(out, ckpt.cursor.epoch);
  if (const auto* tab = dynamic_cast<const TabularPolicy*>(&model)) {
    put_tensor(out, tab->table());
  } else if (const auto* lm = dynamic_cast<const TinyLm*>(&model)) {
    const auto& d = lm->dims();
    put<std::uint64_t>(out, d.vocab);
    put<std::uint64_t>(out, d.context);
    put<std::uint64_t>(out, d.embed);
    put<std::uint64_t>(out, d.hidden);
    for (const Tensor* t : {&lm->embed(), &lm->w1(), &lm->b1(), &lm->w2(), &lm->b2()}) {
      put_tensor(out, *t);
    }
    std::uint32_t n = 0;
    for (auto target : {LoraTarget::kW1, LoraTarget::kW2}) n += lm->adapter(target) ? 1 : 0;
    put(out, n);
    for (auto target : {LoraTarget::kW1, LoraTarget::kW2}) {
      const auto& a = lm->adapter(target);
      if (!a) continue;
      put(out, static_cast<std::uint32_t>(a->target));
      put<std::uint64_t>(out, a->rank);
      put_f64(out, a->alpha);
      put_f64(out, a->dropout);
      put_tensor(out, a->a);
      put_tensor(out, a->b);
    }
  } else {
    throw ContractError("checkpoint: unsupported model type");
  }
  if (!out) throw Error("io", "checkpoint: write failed");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("checkpoint: bad magic");
  }
  const auto version = get<std::uint32_t>(in);
  if (version != kVersion) {
    throw FormatError(fmt::format("checkpoint: unsupported version {}", version));
  }
  const auto kind = static_cast<ModelKind>(get<std::uint32_t>(in));
  const bool frozen = get<std::uint32_t>(in) != 0;
  const auto stage_len = get<std::uint32_t>(in);
  if (stage_len > 4096) throw FormatError("checkpoint: implausible stage length");
  Checkpoint ckpt;
  ckpt.stage.resize(stage_len);
  if (!in.read(ckpt.stage.data(), stage_len)) throw FormatError("checkpoint: truncated");
  ckpt.cursor.seed = get<std::uint64_t>(in);
  ckpt.cursor.step = get<std::uint64_t>(in);
  ckpt.cursor.epoch = get<std::uint64_t>(in);

  std::unique_ptr<LanguageModel> model;
  if (kind == ModelKind::kTabular) {
    model = std::make_unique<TabularPolicy>(get_tensor(in));
  } else if (kind == ModelKind::kTinyLm) {
    TinyLmDims d;
    d.vocab = get<std::uint64_t>(in);
    d.context = get<std::uint64_t>(in);
    d.embed = get<std::uint64_t>(in);
    d.hidden = get<std::uint64_t>(in);
    Tensor e = get_tensor(in), w1 = get_tensor(in), b1 = get_tensor(in), w2 = get_tensor(in),
           b2 = get_tensor(in);
    auto lm = std::make_unique<TinyLm>(d, e, w1, b1, w2, b2);
    const auto n = get<std::uint32_t>(in);
    if (n > 2) throw FormatError("checkpoint: too many adapters");
    for (std::uint32_t i = 0; i < n; ++i) {
      LoraAdapter a;
      a.target = static_cast<LoraTarget>(get<std::uint32_t>(in));
      a.rank = get<std::uint64_t>(in);
      a.alpha = get_f64(in);
      a.dropout = get_f64(in);
      a.a = get_tensor(in);
      a.b = get_tensor(in);
      lm->set_adapter(std::move(a));
    }
    model = std::move(lm);
  } else {
    throw FormatError("checkpoint: unknown model kind");
  }
  ckpt.policy = Policy(std::move(model), frozen);
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io", fmt::format("cannot write {}", path.string()));
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFoundError(fmt::format("checkpoint {} not found", path.string()));
  return read_checkpoint(in);
}

}  // namespace notecraft
