// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/vocab.hpp"

#include <fmt/format.h>

#include "notecraft/errors.hpp"
#include "notecraft/rng.hpp"

namespace notecraft {

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& symbols) {
  symbols_ = {"<pad>", "<bos>", "<eos>", "<sep>", "<nl>"};
  symbols_.insert(symbols_.end(), symbols.begin(), symbols.end());
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    const auto& s = symbols_[i];
    if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos) {
      throw ConfigError(fmt::format("vocab: symbol '{}' is empty or contains whitespace", s));
    }
    if (!index_.emplace(s, static_cast<TokenId>(i)).second) {
      throw ConfigError(fmt::format("vocab: duplicate symbol '{}'", s));
    }
  }
}

const std::string& Vocab::symbol(TokenId id) const {
  if (!contains(id)) throw InputError(fmt::format("vocab: unknown token id {}", id));
  return symbols_[static_cast<std::size_t>(id)];
}

std::optional<TokenId> Vocab::find(std::string_view symbol) const {
  auto it = index_.find(std::string(symbol));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string Vocab::render(std::span<const TokenId> tokens) const {
  std::string out;
  bool line_start = true;
  for (TokenId t : tokens) {
    if (t == kNewline) {
      out += '\n';
      line_start = true;
      continue;
    }
    if (!line_start) out += ' ';
    out += symbol(t);
    line_start = false;
  }
  return out;
}

TokenSeq Vocab::tokenize(std::string_view text) const {
  TokenSeq out;
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '\n') {
      out.push_back(kNewline);
      ++i;
    } else if (c == ' ' || c == '\t' || c == '\r') {
      ++i;
    } else {
      const std::size_t j = text.find_first_of(" \t\r\n", i);
      const auto word = text.substr(i, j == std::string_view::npos ? text.size() - i : j - i);
      auto id = find(word);
      if (!id) throw InputError(fmt::format("vocab: unknown symbol '{}'", word));
      out.push_back(*id);
      i += word.size();
    }
  }
  return out;
}

void Vocab::validate(std::span<const TokenId> tokens) const {
  for (TokenId t : tokens) {
    if (!contains(t)) throw InputError(fmt::format("vocab: unknown token id {}", t));
  }
}

std::uint64_t Vocab::hash() const {
  std::string joined;
  for (const auto& s : symbols_) {
    joined += s;
    joined += '\x1f';
  }
  return fnv1a(joined);
}

}  // namespace notecraft
