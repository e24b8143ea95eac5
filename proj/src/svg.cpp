#include "ecf/svg.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ecf {

namespace {

constexpr double kBarWidth = 28.0;
constexpr double kGap = 6.0;
constexpr double kPanelHeight = 160.0;
constexpr double kTitleHeight = 22.0;
constexpr double kLabelHeight = 34.0;
constexpr double kLeft = 44.0;
constexpr double kRight = 12.0;

std::string escape(const std::string& text) {
  std::string out;
  for (char c : text) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string bar_chart_svg(const std::vector<std::string>& labels,
                          const std::vector<BarPanel>& panels) {
  if (panels.empty()) throw std::invalid_argument("no panels to draw");
  for (const auto& p : panels) {
    if (p.values.size() != labels.size()) {
      throw std::invalid_argument("panel value count does not match labels");
    }
  }
  const double plot_width = static_cast<double>(labels.size()) * (kBarWidth + kGap) + kGap;
  const double width = kLeft + plot_width + kRight;
  const double block = kTitleHeight + kPanelHeight + kLabelHeight;
  const double height = block * static_cast<double>(panels.size());

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{:.0f}\" height=\"{:.0f}\" "
      "viewBox=\"0 0 {:.0f} {:.0f}\" font-family=\"sans-serif\" font-size=\"11\">\n",
      width, height, width, height);
  svg += fmt::format("<rect width=\"{:.0f}\" height=\"{:.0f}\" fill=\"white\"/>\n", width, height);

  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& panel = panels[p];
    const double top = block * static_cast<double>(p);
    const double plot_top = top + kTitleHeight;
    const double zero_y = plot_top + kPanelHeight / 2.0;
    const double half = kPanelHeight / 2.0 - 4.0;

    svg += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-size=\"13\">{}</text>\n", kLeft,
                       top + 15.0, escape(panel.title));
    for (double tick : {-1.0, 0.0, 1.0}) {
      const double y = zero_y - tick * half;
      svg += fmt::format(
          "<line x1=\"{:.1f}\" y1=\"{:.1f}\" x2=\"{:.1f}\" y2=\"{:.1f}\" stroke=\"{}\"/>\n", kLeft,
          y, kLeft + plot_width, y, tick == 0.0 ? "#444" : "#ddd");
      svg += fmt::format(
          "<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:g}</text>\n", kLeft - 6.0,
          y + 4.0, tick);
    }
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double v = std::clamp(panel.values[i], -1.0, 1.0);
      const double x = kLeft + kGap + static_cast<double>(i) * (kBarWidth + kGap);
      const double h = std::abs(v) * half;
      const double y = v >= 0 ? zero_y - h : zero_y;
      const char* colour = panel.highlight == i ? "#d62728" : "#1f77b4";
      svg += fmt::format(
          "<rect x=\"{:.1f}\" y=\"{:.2f}\" width=\"{:.1f}\" height=\"{:.2f}\" fill=\"{}\">"
          "<title>{} {:.4f}</title></rect>\n",
          x, y, kBarWidth, h, colour, escape(labels[i]), panel.values[i]);
      svg += fmt::format(
          "<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n",
          x + kBarWidth / 2.0, plot_top + kPanelHeight + 16.0, escape(labels[i]));
    }
  }
  svg += "</svg>\n";
  return svg;
}

}  // namespace ecf
