#pragma once

#include <optional>
#include <vector>

#include "mopflow/types.hpp"

namespace mopflow {

struct MopConfig {
  enum class ThresholdMode { kOtsu, kFixed };
  ThresholdMode threshold_mode = ThresholdMode::kOtsu;
  double fixed_threshold = 1.0;  // px, used by kFixed
  int morph_radius = 2;
  int min_area = 64;

  void validate() const {
    if (min_area < 1) throw std::invalid_argument("MopConfig: min_area must be >= 1");
    if (morph_radius < 0) throw std::invalid_argument("MopConfig: morph_radius must be >= 0");
  }

  friend bool operator==(const MopConfig&, const MopConfig&) = default;
};

struct Proposal {
  BinaryMask mask;
  long area = 0;
  int top = 0, left = 0, bbox_height = 0, bbox_width = 0;
  double mean_u = 0.0, mean_v = 0.0;
};

// Per-pixel sqrt(u^2 + v^2).
Grid flow_magnitude(const FlowField& flow);

// Otsu threshold over a 256-bin histogram spanning the observed range.
// Returns the lower edge of the best split bin; a constant grid yields the
// maximum so that nothing is selected.
double otsu_threshold(const Grid& values);

// Foreground iff magnitude > threshold (Otsu or fixed per config).
BinaryMask foreground_threshold(const Grid& magnitude, const MopConfig& cfg);

BinaryMask erode(const BinaryMask& mask, int radius);
BinaryMask dilate(const BinaryMask& mask, int radius);

// Morphological opening then closing with a disc of morph_radius.
BinaryMask refine_mask(const BinaryMask& mask, const MopConfig& cfg);

// 8-connected components, area >= min_area, sorted by area descending
// (discovery order breaks ties).
std::vector<Proposal> extract_proposals(const BinaryMask& mask, const FlowField& flow,
                                        const MopConfig& cfg);

// Color-wheel rendering: hue = atan2(v, u), saturation = |w| / max_mag,
// value = 1. Zero flow maps to white.
Image flow_to_color(const FlowField& flow, std::optional<double> max_mag = std::nullopt);

}  // namespace mopflow
