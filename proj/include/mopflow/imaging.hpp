#pragma once

#include "mopflow/types.hpp"

namespace mopflow {

// 0.299 R + 0.587 G + 0.114 B; identity on single-channel input.
Image to_grayscale(const Image& img);

// Central differences in the interior, one-sided at the borders.
// Requires height, width >= 3.
std::pair<Grid, Grid> spatial_gradients(const Grid& img);

// Bilinear sample of img at (x, y); coordinates clamped to the image rectangle.
double bilinear_sample(const Grid& img, double x, double y);

// out(x,y) = bilinear sample of img at (x + u(x,y), y + v(x,y)).
Grid backward_warp(const Grid& img, const FlowField& flow);

// 2x2 box average with stride 2; output dims = ceil(dim/2).
Grid downsample_half(const Grid& img);
Image downsample_half(const Image& img);

// Corner-aligned bilinear resize.
Grid resize_bilinear(const Grid& src, int new_height, int new_width);

// Nearest-neighbour resize (label-preserving).
BinaryMask resize_nearest(const BinaryMask& src, int new_height, int new_width);

// Bilinear upsize of both components; u scaled by newW/W, v by newH/H so
// displacements stay metrically correct at the new resolution.
FlowField upsample_flow(const FlowField& flow, int new_height, int new_width);

}  // namespace mopflow
