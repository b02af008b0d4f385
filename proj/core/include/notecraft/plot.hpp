// Copyright 2026 The Notecraft Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace notecraft {

struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Self-contained SVG line chart with axes, ticks and a legend. Non-finite
// points are skipped. Output is a pure function of the inputs.
std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label, std::span<const Series> series);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace notecraft
