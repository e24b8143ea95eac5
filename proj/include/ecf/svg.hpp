#pragma once

// Minimal deterministic SVG bar charts for fingerprints.

#include <optional>
#include <string>
#include <vector>

namespace ecf {

struct BarPanel {
  std::string title;
  std::vector<double> values;     // one bar per label, expected in [-1, 1]
  std::optional<std::size_t> highlight;  // bar drawn in the accent colour
};

/// One bar chart per panel, stacked vertically, sharing the x labels.
std::string bar_chart_svg(const std::vector<std::string>& labels,
                          const std::vector<BarPanel>& panels);

}  // namespace ecf
