// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include "notecraft/costmodel.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <fmt/os.h>
#include <nlohmann/json.hpp>

#include "notecraft/errors.hpp"

namespace notecraft {

namespace {

constexpr double kTokensPerPriceUnit = 1e6;
constexpr double kWorkMinutesPerYear = 365.0 * 8.0 * 60.0;

const char* type_name(ModelType t) {
  return t == ModelType::kProprietary ? "proprietary" : "open_source";
}

}  // namespace

std::vector<PriceEntry> parse_pricing(const std::string& json_text) {
  std::vector<PriceEntry> out;
  try {
    const auto doc = nlohmann::json::parse(json_text);
    for (const auto& m : doc.at("models")) {
      PriceEntry e;
      e.model_name = m.at("name").get<std::string>();
      e.input_price = m.at("input").get<double>();
      e.output_price = m.at("output").get<double>();
      const auto type = m.value("type", std::string("proprietary"));
      if (type == "proprietary") e.type = ModelType::kProprietary;
      else if (type == "open_source") e.type = ModelType::kOpenSource;
      else throw FormatError(fmt::format("pricing: unknown model type '{}'", type));
      if (e.input_price < 0 || e.output_price < 0) {
        throw InputError(fmt::format("pricing: negative price for {}", e.model_name));
      }
      out.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(fmt::format("pricing: {}", e.what()));
  }
  return out;
}

std::vector<PriceEntry> load_pricing(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw NotFoundError(fmt::format("pricing file {} not found", path.string()));
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_pricing(buf.str());
}

std::filesystem::path default_pricing_path() {
  // Source tree first, so a build directory works without installing.
  const auto local = std::filesystem::path(NOTECRAFT_DATA_DIR) / "pricing.json";
  if (std::filesystem::exists(local)) return local;
  return std::filesystem::path(NOTECRAFT_INSTALLED_DATA_DIR) / "pricing.json";
}

double annual_cost(const PriceEntry& entry, const Workload& w) {
  if (w.n_input_tokens < 0 || w.n_output_tokens < 0 || w.annual_requests < 0) {
    throw InputError("cost: workload values must be >= 0");
  }
  const double per_request_units = entry.input_price * w.n_input_tokens +
                                   entry.output_price * w.n_output_tokens;
  return per_request_units * w.annual_requests / kTokensPerPriceUnit;
}

std::int64_t annual_cost_cents(const PriceEntry& entry, const Workload& workload) {
  return std::llround(annual_cost(entry, workload) * 100.0);
}

double cost_ratio(const PriceEntry& a, const PriceEntry& b, const Workload& workload) {
  const double denom = annual_cost(b, workload);
  if (denom == 0.0) {
    throw UndefinedRatioError(fmt::format("cost_ratio: {} has zero cost", b.model_name));
  }
  return annual_cost(a, workload) / denom;
}

double average_rpm(double annual_requests) {
  if (annual_requests < 0) throw InputError("rpm: requests must be >= 0");
  return annual_requests / kWorkMinutesPerYear;
}

std::vector<CostRow> cost_table(std::span<const PriceEntry> prices, const Workload& workload) {
  std::vector<CostRow> rows;
  for (const auto& p : prices) {
    rows.push_back({p, annual_cost(p, workload), average_rpm(workload.annual_requests)});
  }
  return rows;
}

std::string format_cost_table(std::span<const CostRow> rows, const Workload& w) {
  std::string out = fmt::format("workload: {} input / {} output tokens per request, {} requests/year ({:.3f} RPM)\n",
                                w.n_input_tokens, w.n_output_tokens, w.annual_requests,
                                average_rpm(w.annual_requests));
  out += fmt::format("{:<16} {:<12} {:>8} {:>8} {:>14}\n", "model", "type", "in/1M", "out/1M",
                     "annual USD");
  for (const auto& r : rows) {
    out += fmt::format("{:<16} {:<12} {:>8.2f} {:>8.2f} {:>14.2f}\n", r.entry.model_name,
                       type_name(r.entry.type), r.entry.input_price, r.entry.output_price,
                       r.annual_cost);
  }
  return out;
}

void write_cost_csv(const std::filesystem::path& path, std::span<const CostRow> rows) {
  auto out = fmt::output_file(path.string());
  out.print("model,type,input_price,output_price,annual_cost_usd,rpm\n");
  for (const auto& r : rows) {
    out.print("{},{},{},{},{:.2f},{:.6f}\n", r.entry.model_name, type_name(r.entry.type),
              r.entry.input_price, r.entry.output_price, r.annual_cost, r.rpm);
  }
}

}  // namespace notecraft
