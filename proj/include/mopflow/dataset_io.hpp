#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mopflow/types.hpp"

namespace mopflow {

// Single working resolution of the pipeline.
inline constexpr int kWorkHeight = 448;
inline constexpr int kWorkWidth = 832;

struct SequenceEntry {
  std::string name;
  std::vector<std::filesystem::path> frames;       // sorted, temporal order
  std::vector<std::filesystem::path> annotations;  // sorted; may be empty
};

struct DatasetIndex {
  std::filesystem::path root;
  std::vector<SequenceEntry> sequences;

  const SequenceEntry& sequence(const std::string& name) const;
};

// DAVIS layout: JPEGImages/480p/<seq>/NNNNN.{jpg,png},
// Annotations/480p/<seq>/NNNNN.png. Deterministic lexicographic order.
DatasetIndex load_davis_index(const std::filesystem::path& root,
                              const std::optional<std::filesystem::path>& split_list = std::nullopt);

// Frames t and t+1, resized to 448x832 (bilinear), intensities in [0,1].
std::pair<Image, Image> load_frame_pair(const DatasetIndex& index, const std::string& seq, int t);

// Foreground iff label != 0; nearest-neighbour resize to 448x832.
BinaryMask binarize_annotation(const std::filesystem::path& png_path);

// Middlebury .flo codec: float magic 202021.25, int32 width/height, then
// interleaved (u,v) float32 row-major, all little-endian.
FlowField read_flo(const std::filesystem::path& path);
void write_flo(const std::filesystem::path& path, const FlowField& flow);

Image resize_image(const Image& img, int new_height, int new_width);

}  // namespace mopflow
