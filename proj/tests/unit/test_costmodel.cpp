// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <fstream>

#include "notecraft/costmodel.hpp"
#include "notecraft/errors.hpp"
#include "support/testing.hpp"

using namespace notecraft;

namespace {

const PriceEntry& find(const std::vector<PriceEntry>& prices, const std::string& name) {
  for (const auto& p : prices) {
    if (p.model_name == name) return p;
  }
  FAIL("missing model " << name);
  return prices.front();
}

}  // namespace

TEST_CASE("bundled table reproduces the published annual costs") {
  const auto prices = load_pricing(default_pricing_path());
  REQUIRE(prices.size() == 8);
  const Workload w;
  CHECK(annual_cost_cents(find(prices, "LLaMA-Clinic"), w) == 80000);
  CHECK(annual_cost_cents(find(prices, "Gemini 1.0 Pro"), w) == 300000);
  CHECK(annual_cost_cents(find(prices, "GPT-4 Turbo"), w) == 6000000);
  CHECK(annual_cost_cents(find(prices, "Gemini 1.5 Pro"), w) == 2100000);
  CHECK(cost_ratio(find(prices, "Gemini 1.0 Pro"), find(prices, "LLaMA-Clinic"), w) ==
        doctest::Approx(3.75).epsilon(1e-12));
  CHECK(cost_ratio(find(prices, "GPT-4 Turbo"), find(prices, "LLaMA-Clinic"), w) ==
        doctest::Approx(75.0).epsilon(1e-12));
}

TEST_CASE("cost is linear in each argument (property)") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const PriceEntry e{"m", rng.uniform(0, 20), rng.uniform(0, 40), ModelType::kOpenSource};
    const Workload w{rng.uniform(0, 5000), rng.uniform(0, 2000), rng.uniform(1, 1e7)};
    const double expect = (e.input_price * w.n_input_tokens + e.output_price * w.n_output_tokens) *
                          w.annual_requests / 1e6;
    REQUIRE(annual_cost(e, w) == doctest::Approx(expect).epsilon(1e-12));
    Workload twice = w;
    twice.annual_requests *= 2;
    REQUIRE(annual_cost(e, twice) == doctest::Approx(2 * annual_cost(e, w)).epsilon(1e-12));
  }
}

TEST_CASE("requests per minute over an 8-hour working year") {
  CHECK(average_rpm(1e6) == doctest::Approx(1e6 / (365.0 * 8 * 60)).epsilon(1e-15));
  CHECK(std::floor(average_rpm(1e6) * 1000) / 1000 == 5.707);
}

TEST_CASE("zero-cost denominators are undefined") {
  const PriceEntry free{"free", 0, 0, ModelType::kOpenSource};
  const PriceEntry paid{"paid", 1, 1, ModelType::kOpenSource};
  CHECK_THROWS_AS(cost_ratio(paid, free, Workload{}), UndefinedRatioError);
}

TEST_CASE("pricing parser rejects bad input") {
  CHECK_THROWS_AS(parse_pricing("{"), FormatError);
  CHECK_THROWS_AS(parse_pricing(R"({"models":[{"name":"x","type":"weird","input":1,"output":1}]})"),
                  FormatError);
  CHECK_THROWS_AS(
      parse_pricing(R"({"models":[{"name":"x","type":"proprietary","input":-1,"output":1}]})"),
      InputError);
  const auto ok = parse_pricing(
      R"({"models":[{"name":"x","type":"open_source","input":0.5,"output":0.25}]})");
  REQUIRE(ok.size() == 1);
  CHECK(ok[0].type == ModelType::kOpenSource);
}

TEST_CASE("cost table and CSV") {
  const auto prices = load_pricing(default_pricing_path());
  const auto rows = cost_table(prices, Workload{});
  REQUIRE(rows.size() == 8);
  const auto text = format_cost_table(rows, Workload{});
  CHECK(text.find("800.00") != std::string::npos);
  const auto dir = testing::temp_dir("cost");
  write_cost_csv(dir / "c.csv", rows);
  std::ifstream in(dir / "c.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "model,type,input_price,output_price,annual_cost_usd,rpm");
  std::filesystem::remove_all(dir);
}
