#include "tolcal/diagram.hpp"

#include <cstdio>
#include <string_view>

namespace tolcal {

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string escape(std::string_view text) {
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

std::string reliability_svg(std::span<const ReliabilityBin> bins, double t_ece, const DiagramOptions& options) {
  if (bins.empty()) fail(ErrorKind::empty_input, "reliability diagram needs at least one bin");
  if (options.width < 100 || options.height < 100) fail(ErrorKind::invalid_input, "diagram is too small");

  const double margin = 50.0;
  const double plot_w = options.width - 2 * margin;
  const double plot_h = options.height - 2 * margin;
  const double left = margin, top = margin, bottom = margin + plot_h;
  auto px = [&](double v) { return left + v * plot_w; };
  auto py = [&](double v) { return bottom - v * plot_h; };

  std::string svg;
  svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(options.width) + "\" height=\"" +
         std::to_string(options.height) + "\" viewBox=\"0 0 " + std::to_string(options.width) + " " +
         std::to_string(options.height) + "\">\n";
  svg += "  <title>" + escape(options.title) + "</title>\n";
  svg += "  <rect class=\"frame\" x=\"" + fixed(left) + "\" y=\"" + fixed(top) + "\" width=\"" + fixed(plot_w) +
         "\" height=\"" + fixed(plot_h) + "\" fill=\"none\" stroke=\"#444\"/>\n";

  for (std::size_t i = 0; i < bins.size(); ++i) {
    const auto& b = bins[i];
    const double acc = b.count > 0 ? b.tolerance_accuracy : 0.0;
    const double x = px(b.lower);
    const double w = px(b.upper) - x;
    svg += "  <rect class=\"bar\" data-bin=\"" + std::to_string(i + 1) + "\" data-count=\"" + std::to_string(b.count) +
           "\" data-accuracy=\"" + format_number(acc) + "\" data-confidence=\"" + format_number(b.mean_confidence) +
           "\" x=\"" + fixed(x) + "\" y=\"" + fixed(py(acc)) + "\" width=\"" + fixed(w) + "\" height=\"" +
           fixed(bottom - py(acc)) + "\" fill=\"#4a78b5\" stroke=\"#1f3d66\"/>\n";
  }
  svg += "  <line class=\"diagonal\" x1=\"" + fixed(px(0)) + "\" y1=\"" + fixed(py(0)) + "\" x2=\"" + fixed(px(1)) +
         "\" y2=\"" + fixed(py(1)) + "\" stroke=\"#b53a3a\" stroke-dasharray=\"6 4\"/>\n";

  for (int t = 0; t <= 4; ++t) {
    const double v = t / 4.0;
    svg += "  <text x=\"" + fixed(px(v)) + "\" y=\"" + fixed(bottom + 16) +
           "\" font-size=\"11\" text-anchor=\"middle\">" + fixed(v) + "</text>\n";
    svg += "  <text x=\"" + fixed(left - 6) + "\" y=\"" + fixed(py(v) + 4) +
           "\" font-size=\"11\" text-anchor=\"end\">" + fixed(v) + "</text>\n";
  }
  svg += "  <text x=\"" + fixed(left + plot_w / 2) + "\" y=\"" + fixed(bottom + 36) +
         "\" font-size=\"12\" text-anchor=\"middle\">Confidence</text>\n";
  svg += "  <text x=\"" + fixed(left - 36) + "\" y=\"" + fixed(top + plot_h / 2) +
         "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 " + fixed(left - 36) + " " +
         fixed(top + plot_h / 2) + ")\">Tolerance accuracy</text>\n";
  svg += "  <text x=\"" + fixed(left + plot_w / 2) + "\" y=\"" + fixed(top - 18) +
         "\" font-size=\"13\" text-anchor=\"middle\">" + escape(options.title) + "</text>\n";
  svg += "  <text class=\"caption\" x=\"" + fixed(left + 8) + "\" y=\"" + fixed(top + 18) +
         "\" font-size=\"12\">T-ECE = " + fixed(t_ece, 4) + "</text>\n";
  svg += "</svg>\n";
  return svg;
}

}  // namespace tolcal
