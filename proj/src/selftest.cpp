#include "mopflow/selftest.hpp"

#include <cmath>
#include <random>

namespace mopflow::synth {
namespace {

double unit(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

Grid box_blur3(const Grid& in) {
  const int h = static_cast<int>(in.rows());
  const int w = static_cast<int>(in.cols());
  Grid out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double sum = 0.0;
      int count = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          sum += in(yy, xx);
          ++count;
        }
      out(y, x) = sum / count;
    }
  return out;
}

}  // namespace

Grid smooth_texture(int height, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Grid g(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) g(y, x) = unit(rng);
  g = box_blur3(box_blur3(g));
  const double lo = g.minCoeff();
  const double hi = g.maxCoeff();
  if (hi > lo) g = 0.1 + 0.8 * (g - lo) / (hi - lo);
  return g;
}

std::pair<Grid, Grid> shifted_pair(const Grid& i1, int shift) {
  const int h = static_cast<int>(i1.rows());
  const int w = static_cast<int>(i1.cols());
  Grid i2(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) i2(y, x) = i1(y, std::max(x - shift, 0));
  return {i1, std::move(i2)};
}

double mean_endpoint_error(const FlowField& flow, double gt_u, double gt_v, int border) {
  const int h = flow.height();
  const int w = flow.width();
  double sum = 0.0;
  long count = 0;
  for (int y = border; y < h - border; ++y)
    for (int x = border; x < w - border; ++x) {
      const double du = flow.u(y, x) - gt_u;
      const double dv = flow.v(y, x) - gt_v;
      sum += std::sqrt(du * du + dv * dv);
      ++count;
    }
  return count > 0 ? sum / count : 0.0;
}

FdInstance make_fd_instance(int height, int width, std::uint64_t seed, bool with_occlusion) {
  std::mt19937_64 rng(seed);
  auto in_range = [&rng](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  // Monotone images with per-axis slopes >= 0.010 keep the photometric and
  // gradient-constancy residuals bounded away from the Charbonnier kink.
  std::vector<double> rx1(width), ry1(height), rx2(width), ry2(height);
  for (int x = 0; x < width; ++x) rx1[x] = in_range(0.010, 0.018);
  for (int y = 0; y < height; ++y) ry1[y] = in_range(0.010, 0.018);
  for (int x = 0; x < width; ++x) rx2[x] = in_range(0.010, 0.018);
  for (int y = 0; y < height; ++y) ry2[y] = in_range(0.010, 0.018);

  FdInstance inst;
  inst.i1.resize(height, width);
  inst.i2.resize(height, width);
  double acc_y1 = 0.0, acc_y2 = 0.0;
  for (int y = 0; y < height; ++y) {
    acc_y1 += ry1[y];
    acc_y2 += ry2[y];
    double acc_x1 = 0.0, acc_x2 = 0.0;
    for (int x = 0; x < width; ++x) {
      acc_x1 += rx1[x];
      acc_x2 += rx2[x];
      inst.i1(y, x) = 0.52 + acc_x1 + acc_y1;   // increasing, <= ~0.95
      inst.i2(y, x) = 0.44 - acc_x2 - acc_y2;   // decreasing, >= ~0.03
    }
  }

  // Separable flow whose forward differences all have magnitude >= 0.05.
  std::vector<double> au(width), bu(height), av(width), bv(height);
  for (int x = 0; x < width; ++x) au[x] = in_range(0.05, 0.12);
  for (int y = 0; y < height; ++y) bu[y] = in_range(0.05, 0.12);
  for (int x = 0; x < width; ++x) av[x] = -in_range(0.05, 0.12);
  for (int y = 0; y < height; ++y) bv[y] = -in_range(0.05, 0.12);

  inst.flow = FlowField::zero(height, width);
  double sum_bu = 0.0, sum_bv = 0.0;
  for (int y = 0; y < height; ++y) {
    sum_bu += bu[y];
    sum_bv += bv[y];
    double sum_au = 0.0, sum_av = 0.0;
    for (int x = 0; x < width; ++x) {
      sum_au += au[x];
      sum_av += av[x];
      double u = sum_au + sum_bu;
      double v = sum_av + sum_bv;
      // keep sample positions off bilinear cell boundaries
      const double fx = (x + u) - std::floor(x + u);
      if (fx < 0.01 || fx > 0.99) u += 0.02;
      const double fy = (y + v) - std::floor(y + v);
      if (fy < 0.01 || fy > 0.99) v += 0.02;
      inst.flow.u(y, x) = u;
      inst.flow.v(y, x) = v;
    }
  }

  inst.use_occlusion = with_occlusion;
  inst.occlusion = BinaryMask::Constant(height, width, false);
  if (with_occlusion)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) inst.occlusion(y, x) = unit(rng) < 0.2;
  return inst;
}

FlowField fd_energy_gradient(const Grid& i1, const Grid& i2, const FlowField& flow,
                             const EnergyConfig& cfg, const BinaryMask* occlusion, double step) {
  FlowField grad = FlowField::zero(flow.height(), flow.width());
  FlowField probe = flow;
  auto eval = [&](void) { return total_energy(i1, i2, probe, cfg, occlusion).total; };
  for (int y = 0; y < flow.height(); ++y)
    for (int x = 0; x < flow.width(); ++x) {
      const double u0 = probe.u(y, x);
      probe.u(y, x) = u0 + step;
      const double up = eval();
      probe.u(y, x) = u0 - step;
      const double um = eval();
      probe.u(y, x) = u0;
      grad.u(y, x) = (up - um) / (2.0 * step);

      const double v0 = probe.v(y, x);
      probe.v(y, x) = v0 + step;
      const double vp = eval();
      probe.v(y, x) = v0 - step;
      const double vm = eval();
      probe.v(y, x) = v0;
      grad.v(y, x) = (vp - vm) / (2.0 * step);
    }
  return grad;
}

double max_rel_err(const FlowField& a, const FlowField& b) {
  double worst = 0.0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      const double eu = std::abs(a.u(y, x) - b.u(y, x)) /
                        std::max({std::abs(a.u(y, x)), std::abs(b.u(y, x)), 1.0});
      const double ev = std::abs(a.v(y, x) - b.v(y, x)) /
                        std::max({std::abs(a.v(y, x)), std::abs(b.v(y, x)), 1.0});
      worst = std::max({worst, eu, ev});
    }
  return worst;
}

}  // namespace mopflow::synth

namespace mopflow::synth {

std::vector<std::pair<double*, long>> learnable_views(NetParams& params) {
  std::vector<std::pair<double*, long>> out;
  auto add = [&out](auto& m) { out.emplace_back(m.data(), static_cast<long>(m.size())); };
  for (auto* half : {&params.encoder, &params.decoder})
    for (auto& s : *half) {
      add(s.conv.kernel);
      add(s.conv.bias);
      add(s.bn.gamma);
      add(s.bn.beta);
    }
  add(params.classifier.kernel);
  add(params.classifier.bias);
  return out;
}

double train_loss_of(const NetParams& params, const Tensor& x, const BinaryMask& target) {
  const Tensor probs = forward(params, x, RunMode::kTrain);
  double loss = 0.0;
  for (int y = 0; y < probs.height; ++y)
    for (int px = 0; px < probs.width; ++px)
      loss -= std::log(std::max(probs.at(target(y, px) ? 1 : 0, y, px), 1e-300));
  return loss / (static_cast<double>(probs.height) * probs.width);
}

}  // namespace mopflow::synth
