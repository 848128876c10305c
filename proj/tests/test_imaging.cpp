#include <doctest.h>

#include <random>

#include "mopflow/imaging.hpp"
#include "mopflow/selftest.hpp"

using namespace mopflow;

namespace {

Grid random_grid(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Grid g(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) g(y, x) = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return g;
}

}  // namespace

TEST_CASE("to_grayscale") {
  Grid white = Grid::Constant(4, 5, 1.0);
  Image rgb(white, white, white);
  CHECK((to_grayscale(rgb).gray() == 1.0).all());

  Image gray(random_grid(4, 5, 1));
  Image same = to_grayscale(gray);
  CHECK((same.gray() == gray.gray()).all());

  Image red(Grid::Constant(3, 3, 1.0), Grid::Zero(3, 3), Grid::Zero(3, 3));
  CHECK(to_grayscale(red).gray()(1, 1) == doctest::Approx(0.299).epsilon(1e-12));
}

TEST_CASE("spatial_gradients on ramps") {
  const int h = 6, w = 9;
  Grid constant = Grid::Constant(h, w, 0.37);
  auto [cx, cy] = spatial_gradients(constant);
  CHECK((cx == 0.0).all());
  CHECK((cy == 0.0).all());

  Grid ramp(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) ramp(y, x) = static_cast<double>(x) / (w - 1);
  auto [ix, iy] = spatial_gradients(ramp);
  for (int y = 0; y < h; ++y)
    for (int x = 1; x < w - 1; ++x) {
      CHECK(ix(y, x) == doctest::Approx(1.0 / (w - 1)).epsilon(1e-12));
      CHECK(iy(y, x) == doctest::Approx(0.0).epsilon(1e-12));
    }

  Grid rampT = ramp.transpose();
  auto [tx, ty] = spatial_gradients(rampT);
  for (int y = 1; y < w - 1; ++y)
    for (int x = 0; x < h; ++x) CHECK(ty(y, x) == doctest::Approx(1.0 / (w - 1)).epsilon(1e-12));

  CHECK_THROWS_AS(spatial_gradients(Grid::Zero(2, 5)), std::invalid_argument);
}

TEST_CASE("spatial_gradients linear field exact on interior") {
  const double alpha = 0.013, beta = -0.021;
  Grid img(7, 8);
  for (int y = 0; y < 7; ++y)
    for (int x = 0; x < 8; ++x) img(y, x) = alpha * x + beta * y + 0.5;
  auto [ix, iy] = spatial_gradients(img);
  for (int y = 1; y < 6; ++y)
    for (int x = 1; x < 7; ++x) {
      CHECK(std::abs(ix(y, x) - alpha) < 1e-12);
      CHECK(std::abs(iy(y, x) - beta) < 1e-12);
    }
}

TEST_CASE("backward_warp") {
  Grid img = random_grid(6, 7, 2);

  SUBCASE("zero flow is the identity") {
    Grid out = backward_warp(img, FlowField::zero(6, 7));
    CHECK((out == img).all());
  }

  SUBCASE("integer shift hits grid points") {
    FlowField one(Grid::Constant(6, 7, 1.0), Grid::Zero(6, 7));
    Grid out = backward_warp(img, one);
    for (int y = 0; y < 6; ++y)
      for (int x = 0; x < 6; ++x) CHECK(out(y, x) == img(y, x + 1));
  }

  SUBCASE("half-pixel shift on a ramp averages neighbours") {
    Grid ramp(4, 4);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 4; ++x) ramp(y, x) = 0.1 * x;
    FlowField half(Grid::Constant(4, 4, 0.5), Grid::Zero(4, 4));
    Grid out = backward_warp(ramp, half);
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 3; ++x)
        CHECK(out(y, x) == doctest::Approx(0.5 * (ramp(y, x) + ramp(y, x + 1))).epsilon(1e-12));
  }

  SUBCASE("shape mismatch throws") {
    CHECK_THROWS_AS(backward_warp(img, FlowField::zero(5, 7)), std::invalid_argument);
  }
}

TEST_CASE("downsample_half") {
  CHECK((downsample_half(Grid::Constant(6, 8, 0.42)) == 0.42).all());

  Grid small(2, 2);
  small << 0, 1, 0, 1;
  Grid ds = downsample_half(small);
  CHECK(ds.rows() == 1);
  CHECK(ds.cols() == 1);
  CHECK(ds(0, 0) == doctest::Approx(0.5).epsilon(1e-12));

  Grid checker(4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) checker(y, x) = (x + y) % 2;
  CHECK((downsample_half(checker) == 0.5).all());

  SUBCASE("mean preserved for even dims") {
    Grid g = random_grid(8, 12, 3);
    CHECK(std::abs(downsample_half(g).mean() - g.mean()) < 1e-12);
  }

  CHECK_THROWS_AS(downsample_half(Grid::Zero(1, 1)), std::invalid_argument);
}

TEST_CASE("upsample_flow") {
  FlowField two(Grid::Constant(3, 4, 2.0), Grid::Zero(3, 4));
  FlowField up = upsample_flow(two, 6, 8);
  CHECK((up.u == 4.0).all());
  CHECK((up.v == 0.0).all());

  FlowField zero = FlowField::zero(3, 4);
  FlowField upz = upsample_flow(zero, 9, 11);
  CHECK((upz.u == 0.0).all());
  CHECK((upz.v == 0.0).all());

  SUBCASE("bilinear interpolation between columns") {
    Grid u(2, 2);
    u << 0, 2, 0, 2;
    FlowField f(u, Grid::Zero(2, 2));
    FlowField wide = upsample_flow(f, 2, 4);
    for (int y = 0; y < 2; ++y) {
      CHECK(wide.u(y, 0) == doctest::Approx(0.0).epsilon(1e-12));
      CHECK(wide.u(y, 1) == doctest::Approx(4.0 / 3.0).epsilon(1e-12));
      CHECK(wide.u(y, 2) == doctest::Approx(8.0 / 3.0).epsilon(1e-12));
      CHECK(wide.u(y, 3) == doctest::Approx(4.0).epsilon(1e-12));
    }
  }

  CHECK_THROWS_AS(upsample_flow(two, 2, 4), std::invalid_argument);
}

TEST_CASE("resize_bilinear stays within the input range") {
  Grid g = random_grid(10, 14, 4);
  Grid r = resize_bilinear(g, 17, 9);
  CHECK(r.minCoeff() >= g.minCoeff() - 1e-12);
  CHECK(r.maxCoeff() <= g.maxCoeff() + 1e-12);
}
