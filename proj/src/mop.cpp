#include "mopflow/mop.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

namespace mopflow {

Grid flow_magnitude(const FlowField& flow) {
  return (flow.u.square() + flow.v.square()).sqrt();
}

double otsu_threshold(const Grid& values) {
  constexpr int kBins = 256;
  const double lo = values.minCoeff();
  const double hi = values.maxCoeff();
  if (!(hi > lo)) return hi;  // constant grid: select nothing
  const double bin_width = (hi - lo) / kBins;

  std::array<long, kBins> hist{};
  const int h = static_cast<int>(values.rows());
  const int w = static_cast<int>(values.cols());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int b = static_cast<int>((values(y, x) - lo) / bin_width);
      hist[std::clamp(b, 0, kBins - 1)] += 1;
    }

  const long total = static_cast<long>(h) * w;
  double total_sum = 0.0;
  for (int b = 0; b < kBins; ++b) total_sum += static_cast<double>(b) * hist[b];

  // maximize between-class variance over the split after bin k
  double best_var = -1.0;
  int best_k = 0;
  long w0 = 0;
  double sum0 = 0.0;
  for (int k = 0; k < kBins - 1; ++k) {
    w0 += hist[k];
    sum0 += static_cast<double>(k) * hist[k];
    const long w1 = total - w0;
    if (w0 == 0 || w1 == 0) continue;
    const double mu0 = sum0 / w0;
    const double mu1 = (total_sum - sum0) / w1;
    const double var = static_cast<double>(w0) * static_cast<double>(w1) * (mu0 - mu1) * (mu0 - mu1);
    if (var > best_var) {
      best_var = var;
      best_k = k;
    }
  }
  return lo + (best_k + 1) * bin_width;
}

BinaryMask foreground_threshold(const Grid& magnitude, const MopConfig& cfg) {
  cfg.validate();
  const double t = cfg.threshold_mode == MopConfig::ThresholdMode::kOtsu
                       ? otsu_threshold(magnitude)
                       : cfg.fixed_threshold;
  return magnitude > t;
}

namespace {

// Chebyshev disc: the box element keeps opening/closing of solid rectangles
// exact, which a Euclidean disc cannot do at corners.
std::vector<std::pair<int, int>> disc_offsets(int radius) {
  std::vector<std::pair<int, int>> offsets;
  for (int dy = -radius; dy <= radius; ++dy)
    for (int dx = -radius; dx <= radius; ++dx) offsets.emplace_back(dy, dx);
  return offsets;
}

}  // namespace

BinaryMask erode(const BinaryMask& mask, int radius) {
  if (radius == 0) return mask;
  const auto offsets = disc_offsets(radius);
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  BinaryMask out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool all = true;
      for (const auto& [dy, dx] : offsets) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;  // clipped at borders
        if (!mask(yy, xx)) {
          all = false;
          break;
        }
      }
      out(y, x) = all;
    }
  return out;
}

BinaryMask dilate(const BinaryMask& mask, int radius) {
  if (radius == 0) return mask;
  const auto offsets = disc_offsets(radius);
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  BinaryMask out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      bool any = false;
      for (const auto& [dy, dx] : offsets) {
        const int yy = y + dy, xx = x + dx;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        if (mask(yy, xx)) {
          any = true;
          break;
        }
      }
      out(y, x) = any;
    }
  return out;
}

BinaryMask refine_mask(const BinaryMask& mask, const MopConfig& cfg) {
  cfg.validate();
  const int r = cfg.morph_radius;
  if (r == 0) return mask;
  BinaryMask opened = dilate(erode(mask, r), r);
  return erode(dilate(opened, r), r);
}

std::vector<Proposal> extract_proposals(const BinaryMask& mask, const FlowField& flow,
                                        const MopConfig& cfg) {
  cfg.validate();
  if (!same_shape(mask, flow.u))
    throw std::invalid_argument("extract_proposals: mask and flow shapes differ");
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());

  Plane<int> label = Plane<int>::Constant(h, w, -1);
  std::vector<Proposal> proposals;
  std::vector<std::pair<int, int>> stack;
  for (int sy = 0; sy < h; ++sy) {
    for (int sx = 0; sx < w; ++sx) {
      if (!mask(sy, sx) || label(sy, sx) >= 0) continue;
      const int id = static_cast<int>(proposals.size());
      Proposal p;
      p.mask = BinaryMask::Constant(h, w, false);
      int top = sy, bottom = sy, left = sx, right = sx;
      double sum_u = 0.0, sum_v = 0.0;
      stack.clear();
      stack.emplace_back(sy, sx);
      label(sy, sx) = id;
      while (!stack.empty()) {
        const auto [y, x] = stack.back();
        stack.pop_back();
        p.mask(y, x) = true;
        p.area += 1;
        sum_u += flow.u(y, x);
        sum_v += flow.v(y, x);
        top = std::min(top, y);
        bottom = std::max(bottom, y);
        left = std::min(left, x);
        right = std::max(right, x);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            if (!mask(yy, xx) || label(yy, xx) >= 0) continue;
            label(yy, xx) = id;
            stack.emplace_back(yy, xx);
          }
      }
      p.top = top;
      p.left = left;
      p.bbox_height = bottom - top + 1;
      p.bbox_width = right - left + 1;
      p.mean_u = sum_u / p.area;
      p.mean_v = sum_v / p.area;
      proposals.push_back(std::move(p));
    }
  }

  std::erase_if(proposals, [&](const Proposal& p) { return p.area < cfg.min_area; });
  std::stable_sort(proposals.begin(), proposals.end(),
                   [](const Proposal& a, const Proposal& b) { return a.area > b.area; });
  return proposals;
}

Image flow_to_color(const FlowField& flow, std::optional<double> max_mag) {
  const int h = flow.height();
  const int w = flow.width();
  const Grid mag = flow_magnitude(flow);
  double scale = max_mag.value_or(mag.size() > 0 ? mag.maxCoeff() : 0.0);
  if (!(scale > 0.0)) scale = 1.0;

  Grid r(h, w), g(h, w), b(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double angle = std::atan2(flow.v(y, x), flow.u(y, x));  // (-pi, pi]
      const double hue = (angle + std::numbers::pi) / (2.0 * std::numbers::pi) * 6.0;
      const double sat = std::min(mag(y, x) / scale, 1.0);
      const int sector = std::min(static_cast<int>(hue), 5);
      const double f = hue - sector;
      const double p = 1.0 - sat;
      const double q = 1.0 - sat * f;
      const double t = 1.0 - sat * (1.0 - f);
      double rr, gg, bb;
      switch (sector) {
        case 0: rr = 1.0; gg = t; bb = p; break;
        case 1: rr = q; gg = 1.0; bb = p; break;
        case 2: rr = p; gg = 1.0; bb = t; break;
        case 3: rr = p; gg = q; bb = 1.0; break;
        case 4: rr = t; gg = p; bb = 1.0; break;
        default: rr = 1.0; gg = p; bb = q; break;
      }
      r(y, x) = rr;
      g(y, x) = gg;
      b(y, x) = bb;
    }
  }
  return Image(std::move(r), std::move(g), std::move(b));
}

}  // namespace mopflow
