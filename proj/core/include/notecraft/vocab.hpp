// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace notecraft {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

// Ordered symbol table. Ids are dense 0..size()-1 and the first five ids are
// always the special tokens below.
class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kSep = 3;
  static constexpr TokenId kNewline = 4;  // sentence delimiter inside notes
  static constexpr std::size_t kNumSpecial = 5;

  Vocab();
  // Specials followed by `symbols`; throws ConfigError on duplicates.
  explicit Vocab(const std::vector<std::string>& symbols);

  std::size_t size() const { return symbols_.size(); }
  const std::string& symbol(TokenId id) const;
  std::optional<TokenId> find(std::string_view symbol) const;
  bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < size(); }
  static bool is_special(TokenId id) { return id >= 0 && id < static_cast<TokenId>(kNumSpecial); }
  const std::vector<std::string>& symbols() const { return symbols_; }

  // Space-separated symbols; the newline token renders as '\n'.
  std::string render(std::span<const TokenId> tokens) const;
  // Inverse of render(). Unknown symbols throw InputError.
  TokenSeq tokenize(std::string_view text) const;
  void validate(std::span<const TokenId> tokens) const;

  std::uint64_t hash() const;

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> index_;
};

}  // namespace notecraft
