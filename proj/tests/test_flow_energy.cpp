#include <doctest.h>

#include <cmath>
#include <random>

#include "mopflow/flow_energy.hpp"
#include "mopflow/imaging.hpp"
#include "mopflow/selftest.hpp"

using namespace mopflow;

namespace {

// shifted pair whose last column is duplicated, so the warp at flow (1,0)
// reproduces I1 exactly everywhere
std::pair<Grid, Grid> exact_shift_pair(int h, int w, std::uint64_t seed) {
  Grid i1 = synth::smooth_texture(h, w, seed);
  i1.col(w - 1) = i1.col(w - 2);
  auto [a, b] = synth::shifted_pair(i1, 1);
  return {a, b};
}

FlowField random_flow(int h, int w, std::uint64_t seed, double amplitude) {
  std::mt19937_64 rng(seed);
  FlowField f = FlowField::zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      f.u(y, x) = amplitude * (2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0);
      f.v(y, x) = amplitude * (2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0);
    }
  return f;
}

}  // namespace

TEST_CASE("charbonnier basics") {
  CHECK(charbonnier(0.0, 0.001) == 0.001);
  CHECK(charbonnier(-2.0, 0.001) == charbonnier(2.0, 0.001));
  // sqrt(9 + 1e-6), frozen from a high-precision evaluation
  CHECK(std::abs(charbonnier(3.0, 0.001) - 3.000000166666662037) < 1e-12);

  std::mt19937_64 rng(17);
  for (int i = 0; i < 200; ++i) {
    const double x = 10.0 * (2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0);
    const double eps = 1e-3;
    const double psi = charbonnier(x, eps);
    CHECK(psi >= std::max(std::abs(x), eps));
    CHECK(psi <= std::abs(x) + eps);
  }
}

TEST_CASE("data_term closed form on identical frames") {
  const EnergyConfig cfg;
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const int h = 3 + static_cast<int>(rng() % 12);
    const int w = 3 + static_cast<int>(rng() % 12);
    const Grid img = synth::smooth_texture(h, w, rng());
    const double value = data_term(img, img, FlowField::zero(h, w), cfg);
    const double expect = 3.0 * h * w * cfg.epsilon;
    CHECK(std::abs(value - expect) <= 1e-9 * expect);
  }
}

TEST_CASE("data_term on an exact shifted pair") {
  const EnergyConfig cfg;
  const int h = 10, w = 12;
  auto [i1, i2] = exact_shift_pair(h, w, 23);
  FlowField shift(Grid::Constant(h, w, 1.0), Grid::Zero(h, w));

  BinaryMask occl = BinaryMask::Constant(h, w, false);
  occl.col(w - 1) = true;
  const long unmasked = h * (w - 1);
  const double value = data_term(i1, i2, shift, cfg, &occl);
  const double expect = 3.0 * static_cast<double>(unmasked) * cfg.epsilon;
  CHECK(std::abs(value - expect) <= 1e-9 * expect);

  const double at_zero = data_term(i1, i2, FlowField::zero(h, w), cfg, &occl);
  CHECK(at_zero > value);
}

TEST_CASE("smoothness_term closed forms") {
  const EnergyConfig cfg;

  SUBCASE("constant flow") {
    const int h = 7, w = 5;
    FlowField f(Grid::Constant(h, w, -2.3), Grid::Constant(h, w, 0.8));
    const double expect = cfg.epsilon * (2.0 * h * (w - 1) + 2.0 * w * (h - 1));
    CHECK(std::abs(smoothness_term(f, cfg) - expect) <= 1e-9 * expect);
  }

  SUBCASE("x-ramp on 3x3") {
    // 24 valid forward differences; the 6 u-differences along x equal 1,
    // the remaining 18 are zero
    FlowField f = FlowField::zero(3, 3);
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) f.u(y, x) = x;
    const double expect = 6.0 * charbonnier(1.0, cfg.epsilon) + 18.0 * cfg.epsilon;
    CHECK(std::abs(smoothness_term(f, cfg) - expect) <= 1e-9 * expect);
  }

  SUBCASE("negation and global shifts leave the value unchanged") {
    // dyadic flow values keep the forward differences bitwise identical
    // under a global shift, so both checks are exact
    std::mt19937_64 rng(31);
    FlowField f = FlowField::zero(6, 8);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 8; ++x) {
        f.u(y, x) = static_cast<double>(static_cast<int>(rng() % 257) - 128) / 64.0;
        f.v(y, x) = static_cast<double>(static_cast<int>(rng() % 257) - 128) / 64.0;
      }
    const double base = smoothness_term(f, cfg);
    FlowField neg(-f.u, -f.v);
    CHECK(smoothness_term(neg, cfg) == base);
    FlowField shifted(f.u + 4.25, f.v - 17.5);
    CHECK(smoothness_term(shifted, cfg) == base);
  }

  CHECK_THROWS_AS(smoothness_term(FlowField::zero(1, 1), cfg), std::invalid_argument);
}

TEST_CASE("total_energy composition") {
  const int h = 8, w = 9;
  const Grid i1 = synth::smooth_texture(h, w, 41);
  const Grid i2 = synth::smooth_texture(h, w, 42);
  const FlowField flow = random_flow(h, w, 43, 1.0);

  EnergyConfig cfg;
  const EnergyBreakdown bd = total_energy(i1, i2, flow, cfg);
  CHECK(bd.data >= 0.0);
  CHECK(bd.smooth >= 0.0);
  CHECK(std::abs(bd.total - (cfg.lambda * bd.data + bd.smooth)) <= 1e-9 * bd.total);

  EnergyConfig doubled = cfg;
  doubled.lambda = 2.0 * cfg.lambda;
  const EnergyBreakdown bd2 = total_energy(i1, i2, flow, doubled);
  CHECK(bd2.data == bd.data);
  CHECK(bd2.smooth == bd.smooth);
  CHECK(std::abs(bd2.total - (2.0 * cfg.lambda * bd.data + bd.smooth)) <= 1e-9 * bd2.total);

  SUBCASE("identical frames at zero flow hit both closed forms") {
    const EnergyBreakdown zero = total_energy(i1, i1, FlowField::zero(h, w), cfg);
    const double expect =
        3.0 * h * w * cfg.epsilon + cfg.epsilon * (2.0 * h * (w - 1) + 2.0 * w * (h - 1));
    CHECK(std::abs(zero.total - expect) <= 1e-9 * expect);
  }

  SUBCASE("true flow beats zero flow on a translating pattern") {
    auto [a, b] = exact_shift_pair(12, 14, 47);
    FlowField shift(Grid::Constant(12, 14, 1.0), Grid::Zero(12, 14));
    const double at_truth = total_energy(a, b, shift, cfg).total;
    const double at_zero = total_energy(a, b, FlowField::zero(12, 14), cfg).total;
    CHECK(at_truth < at_zero);
  }
}

TEST_CASE("energy_gradient vanishes at the stationary point") {
  const Grid img = synth::smooth_texture(9, 9, 53);
  const FlowField grad = energy_gradient(img, img, FlowField::zero(9, 9), EnergyConfig{});
  CHECK((grad.u == 0.0).all());
  CHECK((grad.v == 0.0).all());
}

TEST_CASE("energy_gradient matches finite differences") {
  const EnergyConfig cfg;
  double worst = 0.0;
  const std::pair<int, int> shapes[] = {{8, 8}, {9, 12}, {12, 12}};
  int seed = 900;
  for (const auto& [h, w] : shapes) {
    for (const bool occl : {false, true}) {
      const auto inst = synth::make_fd_instance(h, w, static_cast<std::uint64_t>(seed++), occl);
      const BinaryMask* mask = inst.use_occlusion ? &inst.occlusion : nullptr;
      const FlowField analytic = energy_gradient(inst.i1, inst.i2, inst.flow, cfg, mask);
      const FlowField fd = synth::fd_energy_gradient(inst.i1, inst.i2, inst.flow, cfg, mask, 1e-4);
      worst = std::max(worst, synth::max_rel_err(analytic, fd));
    }
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("energy_gradient is local to a perturbation") {
  const int h = 13, w = 13;
  const Grid i1 = synth::smooth_texture(h, w, 61);
  Grid i2 = i1;
  i2(6, 6) += 0.2;
  const FlowField grad = energy_gradient(i1, i2, FlowField::zero(h, w), EnergyConfig{});
  double outside = 0.0, inside = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double mag = std::abs(grad.u(y, x)) + std::abs(grad.v(y, x));
      if (std::max(std::abs(y - 6), std::abs(x - 6)) <= 3)
        inside = std::max(inside, mag);
      else
        outside = std::max(outside, mag);
    }
  CHECK(inside > 0.0);
  CHECK(outside == 0.0);
}

TEST_CASE("energy_gradient propagates the breakdown") {
  const auto inst = synth::make_fd_instance(8, 8, 71, false);
  EnergyBreakdown bd;
  energy_gradient(inst.i1, inst.i2, inst.flow, EnergyConfig{}, nullptr, &bd);
  const EnergyBreakdown direct = total_energy(inst.i1, inst.i2, inst.flow, EnergyConfig{});
  CHECK(bd.total == direct.total);
  CHECK(bd.data == direct.data);
  CHECK(bd.smooth == direct.smooth);
}

TEST_CASE("energy errors") {
  const Grid a = synth::smooth_texture(6, 6, 81);
  const Grid b = synth::smooth_texture(6, 7, 82);
  CHECK_THROWS_AS(data_term(a, b, FlowField::zero(6, 6), EnergyConfig{}), std::invalid_argument);
  EnergyConfig bad;
  bad.epsilon = 0.0;
  CHECK_THROWS_AS(smoothness_term(FlowField::zero(4, 4), bad), std::invalid_argument);
}
