#pragma once

#include <filesystem>

#include "mopflow/types.hpp"

namespace mopflow {

// Decodes a JPEG or PNG frame (by extension) into a 1- or 3-channel image
// with intensities scaled to [0,1]. Palette PNGs are expanded to RGB.
Image read_image(const std::filesystem::path& path);

// Raw annotation labels: palette index or gray value; an RGB annotation
// falls back to 0/1 by any-channel-nonzero.
Plane<int> read_png_labels(const std::filesystem::path& path);

// 8-bit grayscale PNG from intensities in [0,1].
void write_png_gray(const std::filesystem::path& path, const Grid& img);

// 8-bit RGB PNG from a 3-channel image in [0,1].
void write_png_rgb(const std::filesystem::path& path, const Image& img);

// Masks serialize as 8-bit single-channel PNG, foreground = 255.
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);
BinaryMask read_mask_png(const std::filesystem::path& path);

}  // namespace mopflow
