// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace notecraft {

enum class ModelType { kProprietary, kOpenSource };

// Prices are USD per million tokens, as published.
struct PriceEntry {
  std::string model_name;
  double input_price = 0.0;
  double output_price = 0.0;
  ModelType type = ModelType::kProprietary;
};

struct Workload {
  double n_input_tokens = 3000.0;   // per request
  double n_output_tokens = 1000.0;  // per request
  double annual_requests = 1e6;
};

// Pricing file: {"models": [{"name", "type": "proprietary"|"open_source",
// "input", "output"}, ...]}. Throws FormatError on malformed files and
// InputError on negative prices.
std::vector<PriceEntry> load_pricing(const std::filesystem::path& path);
std::vector<PriceEntry> parse_pricing(const std::string& json_text);
// Table shipped with the library.
std::filesystem::path default_pricing_path();

// (p_i·n_i + p_o·n_o)·R with per-million prices converted once.
double annual_cost(const PriceEntry& entry, const Workload& workload);
// Same, rounded to the nearest cent.
std::int64_t annual_cost_cents(const PriceEntry& entry, const Workload& workload);

// cost(a) / cost(b); throws UndefinedRatioError when cost(b) is zero.
double cost_ratio(const PriceEntry& a, const PriceEntry& b, const Workload& workload);

// Requests per minute over an 8-hour, 365-day working year.
double average_rpm(double annual_requests);

struct CostRow {
  PriceEntry entry;
  double annual_cost = 0.0;
  double rpm = 0.0;
};

std::vector<CostRow> cost_table(std::span<const PriceEntry> prices, const Workload& workload);
std::string format_cost_table(std::span<const CostRow> rows, const Workload& workload);
void write_cost_csv(const std::filesystem::path& path, std::span<const CostRow> rows);

}  // namespace notecraft
