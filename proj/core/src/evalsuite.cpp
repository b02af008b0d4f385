// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/evalsuite.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>

#include <fmt/format.h>
#include <fmt/os.h>

#include "notecraft/errors.hpp"
#include "notecraft/rng.hpp"

namespace notecraft {

namespace {

PrfScore make_score(double hits, double cand_total, double ref_total) {
  PrfScore s;
  s.precision = cand_total > 0 ? hits / cand_total : 0.0;
  s.recall = ref_total > 0 ? hits / ref_total : 0.0;
  s.f = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

std::map<std::vector<TokenId>, std::size_t> ngram_counts(std::span<const TokenId> seq,
                                                         std::size_t n) {
  std::map<std::vector<TokenId>, std::size_t> counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) {
    ++counts[std::vector<TokenId>(seq.begin() + static_cast<std::ptrdiff_t>(i),
                                  seq.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

using LcsTable = std::vector<std::vector<std::size_t>>;

LcsTable lcs_table(std::span<const TokenId> a, std::span<const TokenId> b) {
  LcsTable t(a.size() + 1, std::vector<std::size_t>(b.size() + 1, 0));
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
    }
  }
  return t;
}

// Indices into `ref` of one LCS with `cand`, recovered by backtracking.
std::vector<std::size_t> lcs_indices(std::span<const TokenId> ref, std::span<const TokenId> cand) {
  const auto t = lcs_table(ref, cand);
  std::vector<std::size_t> out;
  std::size_t i = ref.size(), j = cand.size();
  while (i > 0 && j > 0) {
    if (ref[i - 1] == cand[j - 1]) {
      out.push_back(i - 1);
      --i;
      --j;
    } else if (t[i][j - 1] > t[i - 1][j]) {
      --j;
    } else {
      --i;
    }
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::vector<TokenSeq> split_sentences(std::span<const TokenId> seq, TokenId delimiter) {
  std::vector<TokenSeq> out;
  TokenSeq current;
  for (TokenId t : seq) {
    if (t == delimiter) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(t);
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

// Keeps the newline token as a sentence boundary; drops every other special.
TokenSeq content_with_lines(std::span<const TokenId> seq) {
  TokenSeq out;
  for (TokenId t : seq) {
    if (t == Vocab::kNewline || !Vocab::is_special(t)) out.push_back(t);
  }
  return out;
}

RougeScores score_all(std::span<const TokenId> cand_lines, std::span<const TokenId> ref_lines,
                      TokenId delimiter) {
  TokenSeq cand, ref;
  for (TokenId t : cand_lines) {
    if (t != delimiter) cand.push_back(t);
  }
  for (TokenId t : ref_lines) {
    if (t != delimiter) ref.push_back(t);
  }
  return {rouge_n(cand, ref, 1), rouge_n(cand, ref, 2), rouge_l(cand, ref),
          rouge_lsum(cand_lines, ref_lines, delimiter)};
}

}  // namespace

PrfScore rouge_n_score(std::span<const TokenId> candidate, std::span<const TokenId> reference,
                       std::size_t n) {
  if (n == 0) throw ContractError("rouge_n: n must be >= 1");
  const auto cand = ngram_counts(candidate, n);
  const auto ref = ngram_counts(reference, n);
  std::size_t hits = 0;
  for (const auto& [gram, count] : cand) {
    if (auto it = ref.find(gram); it != ref.end()) hits += std::min(count, it->second);
  }
  const double cand_total = candidate.size() >= n ? double(candidate.size() - n + 1) : 0.0;
  const double ref_total = reference.size() >= n ? double(reference.size() - n + 1) : 0.0;
  return make_score(static_cast<double>(hits), cand_total, ref_total);
}

double rouge_n(std::span<const TokenId> candidate, std::span<const TokenId> reference,
               std::size_t n) {
  return rouge_n_score(candidate, reference, n).f;
}

std::size_t lcs_length(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

PrfScore rouge_l_score(std::span<const TokenId> candidate, std::span<const TokenId> reference) {
  return make_score(static_cast<double>(lcs_length(candidate, reference)),
                    static_cast<double>(candidate.size()), static_cast<double>(reference.size()));
}

double rouge_l(std::span<const TokenId> candidate, std::span<const TokenId> reference) {
  return rouge_l_score(candidate, reference).f;
}

PrfScore rouge_lsum_score(std::span<const TokenId> candidate, std::span<const TokenId> reference,
                          TokenId delimiter) {
  const auto cand = split_sentences(candidate, delimiter);
  const auto ref = split_sentences(reference, delimiter);
  std::unordered_map<TokenId, std::size_t> cand_left, ref_left;
  std::size_t cand_total = 0, ref_total = 0;
  for (const auto& s : cand) {
    cand_total += s.size();
    for (TokenId t : s) ++cand_left[t];
  }
  for (const auto& s : ref) {
    ref_total += s.size();
    for (TokenId t : s) ++ref_left[t];
  }
  std::size_t hits = 0;
  for (const auto& r : ref) {
    std::set<std::size_t> hit_positions;
    for (const auto& c : cand) {
      for (auto i : lcs_indices(r, c)) hit_positions.insert(i);
    }
    for (auto i : hit_positions) {
      const TokenId t = r[i];
      auto& cl = cand_left[t];
      auto& rl = ref_left[t];
      if (cl > 0 && rl > 0) {
        ++hits;
        --cl;
        --rl;
      }
    }
  }
  return make_score(static_cast<double>(hits), static_cast<double>(cand_total),
                    static_cast<double>(ref_total));
}

double rouge_lsum(std::span<const TokenId> candidate, std::span<const TokenId> reference,
                  TokenId delimiter) {
  return rouge_lsum_score(candidate, reference, delimiter).f;
}

RougeScores score_note(std::span<const TokenId> candidate, std::span<const TokenId> reference) {
  return score_all(content_with_lines(candidate), content_with_lines(reference), Vocab::kNewline);
}

RougeScores score_text(std::string_view candidate, std::string_view reference) {
  // Words are interned to ids; id 0 marks a line break.
  std::unordered_map<std::string, TokenId> ids;
  auto encode = [&](std::string_view text) {
    TokenSeq out;
    std::size_t i = 0;
    while (i < text.size()) {
      const char c = text[i];
      if (c == '\n') {
        out.push_back(0);
        ++i;
      } else if (c == ' ' || c == '\t' || c == '\r') {
        ++i;
      } else {
        const std::size_t j = text.find_first_of(" \t\r\n", i);
        const std::string word(text.substr(i, j == std::string_view::npos ? text.size() - i : j - i));
        auto [it, inserted] = ids.emplace(word, static_cast<TokenId>(ids.size() + 1));
        out.push_back(it->second);
        i += word.size();
      }
    }
    return out;
  };
  const auto cand = encode(candidate);
  const auto ref = encode(reference);
  return score_all(cand, ref, 0);
}

double perplexity(const Policy& policy, std::span<const TrainExample> corpus) {
  if (corpus.empty()) throw InputError("perplexity: empty corpus");
  const auto vocab = static_cast<TokenId>(policy.vocab_size());
  NoGradGuard no_grad;
  double nll = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : corpus) {
    for (TokenId t : ex.tokens) {
      if (t < 0 || t >= vocab) throw InputError(fmt::format("perplexity: token id {} out of vocab", t));
    }
    nll += example_nll(policy, ex).item();
    tokens += ex.scored();
  }
  if (tokens == 0) throw InputError("perplexity: corpus has no scored positions");
  return std::exp(nll / static_cast<double>(tokens));
}

double perplexity(const Policy& policy, std::span<const TokenSeq> corpus) {
  std::vector<TrainExample> examples;
  examples.reserve(corpus.size());
  for (const auto& seq : corpus) examples.push_back(lm_example(seq));
  return perplexity(policy, examples);
}

RougeScores evaluate_notes(const Policy& policy, const TaskLayout& layout,
                           std::span<const DialogueCase* const> cases, const DecodeConfig& cfg) {
  if (cases.empty()) throw InputError("evaluate: no cases");
  RougeScores total;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    DecodeConfig c = cfg;
    c.seed = derive_seed(cfg.seed, {0xe7a1, i});
    const auto out = decode(policy, make_prompt(layout, *cases[i]), c);
    const auto s = score_note(out, cases[i]->gold_note);
    total.rouge1 += s.rouge1;
    total.rouge2 += s.rouge2;
    total.rougeL += s.rougeL;
    total.rougeLsum += s.rougeLsum;
  }
  const auto n = static_cast<double>(cases.size());
  total.rouge1 /= n;
  total.rouge2 /= n;
  total.rougeL /= n;
  total.rougeLsum /= n;
  return total;
}

namespace {

constexpr const char* kMetrics[] = {"rouge1", "rouge2", "rougeL", "rougeLsum"};

double metric_of(const RougeScores& s, std::size_t m) {
  switch (m) {
    case 0: return s.rouge1;
    case 1: return s.rouge2;
    case 2: return s.rougeL;
    default: return s.rougeLsum;
  }
}

}  // namespace

RoundTable round_table(std::span<const EvalRow> rows) {
  if (rows.empty()) throw InputError("round_table: no evaluation rows");
  RoundTable table;
  std::vector<std::string> sections;
  std::map<std::string, std::size_t> max_round;
  for (const auto& r : rows) {
    if (std::find(sections.begin(), sections.end(), r.section) == sections.end()) {
      sections.push_back(r.section);
    }
    auto& m = max_round[r.section];
    m = std::max(m, r.round);
    if (std::find(table.models.begin(), table.models.end(), r.model) == table.models.end()) {
      table.models.push_back(r.model);
    }
  }
  std::sort(table.models.begin(), table.models.end());

  std::map<std::tuple<std::string, std::size_t, std::size_t>, std::size_t> column_index;
  for (const auto& section : sections) {
    for (std::size_t m = 0; m < std::size(kMetrics); ++m) {
      for (std::size_t round = 0; round <= max_round[section]; ++round) {
        column_index[{section, m, round}] = table.columns.size();
        table.columns.push_back({section, round, kMetrics[m]});
      }
    }
  }
  table.values.assign(table.models.size(),
                      std::vector<std::optional<double>>(table.columns.size()));
  table.top.assign(table.models.size(), std::vector<bool>(table.columns.size(), false));
  for (const auto& r : rows) {
    const auto mi = static_cast<std::size_t>(
        std::find(table.models.begin(), table.models.end(), r.model) - table.models.begin());
    for (std::size_t m = 0; m < std::size(kMetrics); ++m) {
      auto& cell = table.values[mi][column_index.at({r.section, m, r.round})];
      if (cell) {
        throw InputError(fmt::format("round_table: duplicate cell {}/{}/R{}", r.model, r.section,
                                     r.round));
      }
      cell = metric_of(r.scores, m);
    }
  }
  for (std::size_t c = 0; c < table.columns.size(); ++c) {
    std::vector<double> present;
    for (std::size_t mi = 0; mi < table.models.size(); ++mi) {
      if (table.values[mi][c]) present.push_back(*table.values[mi][c]);
    }
    if (present.empty()) continue;
    std::sort(present.begin(), present.end(), std::greater<>());
    const double cutoff = present[std::min<std::size_t>(1, present.size() - 1)];
    for (std::size_t mi = 0; mi < table.models.size(); ++mi) {
      table.top[mi][c] = table.values[mi][c] && *table.values[mi][c] >= cutoff;
    }
  }
  return table;
}

std::string format_round_table(const RoundTable& table) {
  std::size_t name_width = 5;
  for (const auto& m : table.models) name_width = std::max(name_width, m.size());
  std::string out;
  std::size_t c = 0;
  while (c < table.columns.size()) {
    const auto& head = table.columns[c];
    std::size_t end = c;
    while (end < table.columns.size() && table.columns[end].section == head.section &&
           table.columns[end].metric == head.metric) {
      ++end;
    }
    out += fmt::format("[{}] {}\n", head.section, head.metric);
    out += fmt::format("{:<{}}", "model", name_width);
    for (std::size_t k = c; k < end; ++k) out += fmt::format("  {:>8}", fmt::format("R{}", table.columns[k].round));
    out += '\n';
    for (std::size_t mi = 0; mi < table.models.size(); ++mi) {
      out += fmt::format("{:<{}}", table.models[mi], name_width);
      for (std::size_t k = c; k < end; ++k) {
        const auto& v = table.values[mi][k];
        out += v ? fmt::format("  {:>7.4f}{}", *v, table.top[mi][k] ? '*' : ' ')
                 : fmt::format("  {:>8}", "-");
      }
      out += '\n';
    }
    out += '\n';
    c = end;
  }
  out += "* top two per column\n";
  return out;
}

void write_round_table_csv(const std::filesystem::path& path, const RoundTable& table) {
  auto out = fmt::output_file(path.string());
  out.print("model");
  for (const auto& col : table.columns) out.print(",{}/{}/R{}", col.section, col.metric, col.round);
  out.print("\n");
  for (std::size_t mi = 0; mi < table.models.size(); ++mi) {
    out.print("{}", table.models[mi]);
    for (const auto& v : table.values[mi]) {
      if (v) out.print(",{:.6f}", *v);
      else out.print(",");
    }
    out.print("\n");
  }
}

}  // namespace notecraft
