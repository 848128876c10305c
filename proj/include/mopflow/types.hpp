#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <utility>
#include <vector>

namespace mopflow {

// Dense H x W plane, row-major to match the on-disk layouts.
template <typename T>
using Plane = Eigen::Array<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Grid = Plane<double>;
using BinaryMask = Plane<bool>;

// Planar image, 1 or 3 channels, intensities in [0,1].
struct Image {
  std::vector<Grid> planes;

  Image() = default;
  explicit Image(Grid gray) { planes.push_back(std::move(gray)); }
  Image(Grid r, Grid g, Grid b) {
    planes.push_back(std::move(r));
    planes.push_back(std::move(g));
    planes.push_back(std::move(b));
    if (planes[1].rows() != planes[0].rows() || planes[1].cols() != planes[0].cols() ||
        planes[2].rows() != planes[0].rows() || planes[2].cols() != planes[0].cols())
      throw std::invalid_argument("Image: channel planes must share one shape");
  }

  int height() const { return planes.empty() ? 0 : static_cast<int>(planes[0].rows()); }
  int width() const { return planes.empty() ? 0 : static_cast<int>(planes[0].cols()); }
  int channels() const { return static_cast<int>(planes.size()); }

  // Single-channel view; the energy pipeline works on gray planes only.
  const Grid& gray() const {
    if (channels() != 1) throw std::invalid_argument("Image::gray: image has more than one channel");
    return planes[0];
  }
};

// Per-pixel displacement field in pixels; u is horizontal, v vertical.
struct FlowField {
  Grid u, v;

  FlowField() = default;
  FlowField(Grid u_, Grid v_) : u(std::move(u_)), v(std::move(v_)) {
    if (u.rows() != v.rows() || u.cols() != v.cols())
      throw std::invalid_argument("FlowField: u and v must share one shape");
  }

  int height() const { return static_cast<int>(u.rows()); }
  int width() const { return static_cast<int>(u.cols()); }

  static FlowField zero(int height, int width) {
    return FlowField(Grid::Zero(height, width), Grid::Zero(height, width));
  }
};

template <typename A, typename B>
bool same_shape(const A& a, const B& b) {
  return a.rows() == b.rows() && a.cols() == b.cols();
}

}  // namespace mopflow
