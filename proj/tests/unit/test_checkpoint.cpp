// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <sstream>

#include "notecraft/checkpoint.hpp"
#include "notecraft/errors.hpp"
#include "support/testing.hpp"

using namespace notecraft;

namespace {

void require_same(const Policy& a, const Policy& b) {
  const auto na = a.model().named_tensors(), nb = b.model().named_tensors();
  REQUIRE(na.size() == nb.size());
  for (std::size_t i = 0; i < na.size(); ++i) {
    REQUIRE(na[i].name == nb[i].name);
    REQUIRE(na[i].tensor.shape() == nb[i].tensor.shape());
    REQUIRE(na[i].tensor.requires_grad() == nb[i].tensor.requires_grad());
    for (std::size_t j = 0; j < na[i].tensor.numel(); ++j) {
      REQUIRE(na[i].tensor.at(j) == nb[i].tensor.at(j));
    }
  }
}

Checkpoint round_trip(const Checkpoint& c) {
  std::stringstream buf;
  write_checkpoint(buf, c);
  return read_checkpoint(buf);
}

}  // namespace

TEST_CASE("checkpoints round-trip bit-exactly") {
  const Checkpoint tab{testing::random_tabular(7, 3), RngCursor{9, 10, 2}, "tabular"};
  const auto t2 = round_trip(tab);
  require_same(tab.policy, t2.policy);
  CHECK(t2.cursor == tab.cursor);
  CHECK(t2.stage == "tabular");

  Policy adapted = attach_lora(testing::small_tiny_lm(4), LoraConfig{}, 5);
  const Checkpoint lm{snapshot(adapted), RngCursor{1, 2, 3}, "sft/epoch1"};
  const auto l2 = round_trip(lm);
  require_same(lm.policy, l2.policy);
  CHECK(l2.policy.frozen());
}

TEST_CASE("serialization is deterministic") {
  const Checkpoint c{testing::small_tiny_lm(2), {}, "x"};
  std::stringstream a, b;
  write_checkpoint(a, c);
  write_checkpoint(b, round_trip(c));
  CHECK(a.str() == b.str());
}

TEST_CASE("corrupt input is rejected") {
  std::stringstream bad("XXXX");
  CHECK_THROWS_AS(read_checkpoint(bad), FormatError);
  std::stringstream buf;
  write_checkpoint(buf, Checkpoint{testing::small_tiny_lm(2), {}, "x"});
  std::stringstream truncated(buf.str().substr(0, buf.str().size() / 2));
  CHECK_THROWS_AS(read_checkpoint(truncated), FormatError);
}
