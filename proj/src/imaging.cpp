#include "mopflow/imaging.hpp"

#include <algorithm>
#include <cmath>

namespace mopflow {

Image to_grayscale(const Image& img) {
  if (img.channels() == 1) return img;
  if (img.channels() != 3)
    throw std::invalid_argument("to_grayscale: expected 1 or 3 channels");
  // integer weights over 1000 keep the unit-sum exact
  Grid g = (299.0 * img.planes[0] + 587.0 * img.planes[1] + 114.0 * img.planes[2]) / 1000.0;
  return Image(std::move(g));
}

std::pair<Grid, Grid> spatial_gradients(const Grid& img) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  if (h < 3 || w < 3) throw std::invalid_argument("spatial_gradients: image smaller than 3x3");
  Grid ix(h, w), iy(h, w);
  for (int y = 0; y < h; ++y) {
    ix(y, 0) = img(y, 1) - img(y, 0);
    for (int x = 1; x < w - 1; ++x) ix(y, x) = 0.5 * (img(y, x + 1) - img(y, x - 1));
    ix(y, w - 1) = img(y, w - 1) - img(y, w - 2);
  }
  for (int x = 0; x < w; ++x) {
    iy(0, x) = img(1, x) - img(0, x);
    iy(h - 1, x) = img(h - 1, x) - img(h - 2, x);
  }
  for (int y = 1; y < h - 1; ++y)
    for (int x = 0; x < w; ++x) iy(y, x) = 0.5 * (img(y + 1, x) - img(y - 1, x));
  return {std::move(ix), std::move(iy)};
}

double bilinear_sample(const Grid& img, double x, double y) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  const double sx = std::clamp(x, 0.0, static_cast<double>(w - 1));
  const double sy = std::clamp(y, 0.0, static_cast<double>(h - 1));
  const int x0 = std::min(static_cast<int>(std::floor(sx)), w - 2 >= 0 ? w - 2 : 0);
  const int y0 = std::min(static_cast<int>(std::floor(sy)), h - 2 >= 0 ? h - 2 : 0);
  const double fx = sx - x0;
  const double fy = sy - y0;
  const int x1 = std::min(x0 + 1, w - 1);
  const int y1 = std::min(y0 + 1, h - 1);
  return (1.0 - fy) * ((1.0 - fx) * img(y0, x0) + fx * img(y0, x1)) +
         fy * ((1.0 - fx) * img(y1, x0) + fx * img(y1, x1));
}

Grid backward_warp(const Grid& img, const FlowField& flow) {
  if (!same_shape(img, flow.u))
    throw std::invalid_argument("backward_warp: image and flow shapes differ");
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  Grid out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      out(y, x) = bilinear_sample(img, x + flow.u(y, x), y + flow.v(y, x));
  return out;
}

Grid downsample_half(const Grid& img) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  if (h < 2 && w < 2) throw std::invalid_argument("downsample_half: degenerate 1x1 input");
  const int oh = (h + 1) / 2;
  const int ow = (w + 1) / 2;
  Grid out(oh, ow);
  for (int y = 0; y < oh; ++y) {
    const int y0 = 2 * y;
    const int y1 = std::min(y0 + 1, h - 1);
    for (int x = 0; x < ow; ++x) {
      const int x0 = 2 * x;
      const int x1 = std::min(x0 + 1, w - 1);
      out(y, x) = 0.25 * (img(y0, x0) + img(y0, x1) + img(y1, x0) + img(y1, x1));
    }
  }
  return out;
}

Image downsample_half(const Image& img) {
  Image out;
  for (const Grid& p : img.planes) out.planes.push_back(downsample_half(p));
  return out;
}

Grid resize_bilinear(const Grid& src, int new_height, int new_width) {
  const int h = static_cast<int>(src.rows());
  const int w = static_cast<int>(src.cols());
  if (new_height < 1 || new_width < 1)
    throw std::invalid_argument("resize_bilinear: empty target");
  Grid out(new_height, new_width);
  const double sy = new_height > 1 ? static_cast<double>(h - 1) / (new_height - 1) : 0.0;
  const double sx = new_width > 1 ? static_cast<double>(w - 1) / (new_width - 1) : 0.0;
  for (int y = 0; y < new_height; ++y)
    for (int x = 0; x < new_width; ++x) out(y, x) = bilinear_sample(src, x * sx, y * sy);
  return out;
}

BinaryMask resize_nearest(const BinaryMask& src, int new_height, int new_width) {
  const int h = static_cast<int>(src.rows());
  const int w = static_cast<int>(src.cols());
  if (new_height < 1 || new_width < 1)
    throw std::invalid_argument("resize_nearest: empty target");
  BinaryMask out(new_height, new_width);
  const double sy = new_height > 1 ? static_cast<double>(h - 1) / (new_height - 1) : 0.0;
  const double sx = new_width > 1 ? static_cast<double>(w - 1) / (new_width - 1) : 0.0;
  for (int y = 0; y < new_height; ++y) {
    const int yy = std::clamp(static_cast<int>(std::lround(y * sy)), 0, h - 1);
    for (int x = 0; x < new_width; ++x) {
      const int xx = std::clamp(static_cast<int>(std::lround(x * sx)), 0, w - 1);
      out(y, x) = src(yy, xx);
    }
  }
  return out;
}

FlowField upsample_flow(const FlowField& flow, int new_height, int new_width) {
  if (new_height < flow.height() || new_width < flow.width())
    throw std::invalid_argument("upsample_flow: target smaller than source");
  const double su = static_cast<double>(new_width) / flow.width();
  const double sv = static_cast<double>(new_height) / flow.height();
  Grid u = resize_bilinear(flow.u, new_height, new_width) * su;
  Grid v = resize_bilinear(flow.v, new_height, new_width) * sv;
  return FlowField(std::move(u), std::move(v));
}

}  // namespace mopflow
