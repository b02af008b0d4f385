// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "notecraft/policy.hpp"

namespace notecraft {

// Trainer position stored alongside the weights so a run can be resumed
// with the same random streams.
struct RngCursor {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;

  bool operator==(const RngCursor&) const = default;
};

struct Checkpoint {
  Policy policy;
  RngCursor cursor;
  std::string stage;  // free-form provenance, e.g. "sft" or "rlaif/round2"
};

// Binary layout, all integers little-endian:
//   "NCKP" u32 version=1
//   u32 kind, u32 frozen, u32 len + stage bytes, u64 seed, u64 step, u64 epoch
//   kind=tabular: tensor(table)
//   kind=tiny_lm: u64 vocab, context, embed, hidden; tensors embed w1 b1 w2 b2;
//                 u32 n_adapters, each: u32 target, u64 rank, f64 alpha,
//                 f64 dropout, tensor(a), tensor(b)
//   tensor := u32 rank, u64 dims[rank], u8 requires_grad, f64 values[...]
// Doubles are stored as their raw IEEE-754 bits, so a round trip is exact.
void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace notecraft
