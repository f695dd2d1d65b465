#pragma once

#include <span>
#include <string>

#include "tolcal/metrics.hpp"

namespace tolcal {

struct DiagramOptions {
  std::string title = "Reliability diagram";
  int width = 480;
  int height = 480;
};

// Standalone SVG: one <rect class="bar"> per bin (height = tolerance
// accuracy, empty bins drawn with zero height), the identity diagonal as
// <line class="diagonal">, and the T-ECE in the caption.
std::string reliability_svg(std::span<const ReliabilityBin> bins, double t_ece, const DiagramOptions& options = {});

}  // namespace tolcal
