#include "mopflow/dataset_io.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>

#include "mopflow/image_codec.hpp"
#include "mopflow/imaging.hpp"

static_assert(std::endian::native == std::endian::little,
              "flo codec assumes a little-endian host");

namespace mopflow {

namespace fs = std::filesystem;

namespace {

constexpr float kFloMagic = 202021.25f;

bool has_extension(const fs::path& p, std::initializer_list<const char*> exts) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (const char* e : exts)
    if (ext == e) return true;
  return false;
}

std::vector<fs::path> sorted_files(const fs::path& dir, std::initializer_list<const char*> exts) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && has_extension(entry.path(), exts))
      files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  return files;
}

std::set<std::string> read_split_list(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("load_davis_index: cannot open split list " + path.string());
  std::set<std::string> names;
  std::string line;
  while (std::getline(f, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    std::size_t start = line.find_first_not_of(' ');
    if (start == std::string::npos) continue;
    line = line.substr(start);
    if (line.empty() || line[0] == '#') continue;
    names.insert(line);
  }
  return names;
}

}  // namespace

const SequenceEntry& DatasetIndex::sequence(const std::string& name) const {
  for (const auto& s : sequences)
    if (s.name == name) return s;
  throw std::invalid_argument("DatasetIndex: unknown sequence " + name);
}

DatasetIndex load_davis_index(const fs::path& root, const std::optional<fs::path>& split_list) {
  if (!fs::exists(root)) throw std::runtime_error("load_davis_index: missing root " + root.string());
  const fs::path frames_root = root / "JPEGImages" / "480p";
  const fs::path ann_root = root / "Annotations" / "480p";
  if (!fs::exists(frames_root))
    throw std::runtime_error("load_davis_index: missing " + frames_root.string());

  std::optional<std::set<std::string>> wanted;
  if (split_list) wanted = read_split_list(*split_list);

  std::vector<std::string> names;
  for (const auto& entry : fs::directory_iterator(frames_root))
    if (entry.is_directory()) names.push_back(entry.path().filename().string());
  std::sort(names.begin(), names.end());

  DatasetIndex index;
  index.root = root;
  for (const std::string& name : names) {
    if (wanted && !wanted->count(name)) continue;
    SequenceEntry seq;
    seq.name = name;
    seq.frames = sorted_files(frames_root / name, {".jpg", ".jpeg", ".png"});
    if (seq.frames.empty())
      throw std::runtime_error("load_davis_index: sequence " + name + " has zero frames");
    const fs::path ann_dir = ann_root / name;
    if (fs::exists(ann_dir)) {
      seq.annotations = sorted_files(ann_dir, {".png"});
      if (seq.annotations.size() != seq.frames.size())
        throw std::runtime_error("load_davis_index: sequence " + name +
                                 " has mismatched frame/annotation counts");
    }
    if (wanted) wanted->erase(name);
    index.sequences.push_back(std::move(seq));
  }
  if (wanted && !wanted->empty())
    throw std::runtime_error("load_davis_index: split list names unknown sequence " +
                             *wanted->begin());
  if (index.sequences.empty())
    throw std::runtime_error("load_davis_index: no sequences under " + frames_root.string());
  return index;
}

Image resize_image(const Image& img, int new_height, int new_width) {
  Image out;
  for (const Grid& p : img.planes) out.planes.push_back(resize_bilinear(p, new_height, new_width));
  return out;
}

std::pair<Image, Image> load_frame_pair(const DatasetIndex& index, const std::string& seq, int t) {
  const SequenceEntry& entry = index.sequence(seq);
  if (t < 0 || t + 1 >= static_cast<int>(entry.frames.size()))
    throw std::invalid_argument("load_frame_pair: frame index out of range for " + seq);
  Image a = resize_image(read_image(entry.frames[static_cast<std::size_t>(t)]), kWorkHeight, kWorkWidth);
  Image b = resize_image(read_image(entry.frames[static_cast<std::size_t>(t) + 1]), kWorkHeight, kWorkWidth);
  return {std::move(a), std::move(b)};
}

BinaryMask binarize_annotation(const fs::path& png_path) {
  const Plane<int> labels = read_png_labels(png_path);
  const BinaryMask mask = labels != 0;
  return resize_nearest(mask, kWorkHeight, kWorkWidth);
}

FlowField read_flo(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_flo: cannot open " + path.string());
  float magic = 0.0f;
  std::int32_t w = 0, h = 0;
  f.read(reinterpret_cast<char*>(&magic), sizeof(magic));
  if (!f || magic != kFloMagic)
    throw std::runtime_error("read_flo: bad magic in " + path.string());
  f.read(reinterpret_cast<char*>(&w), sizeof(w));
  f.read(reinterpret_cast<char*>(&h), sizeof(h));
  if (!f || w <= 0 || h <= 0 || w > 1 << 16 || h > 1 << 16)
    throw std::runtime_error("read_flo: implausible dimensions in " + path.string());
  std::vector<float> buf(static_cast<std::size_t>(w) * h * 2);
  f.read(reinterpret_cast<char*>(buf.data()),
         static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw std::runtime_error("read_flo: truncated payload in " + path.string());
  FlowField flow = FlowField::zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      flow.u(y, x) = buf[(static_cast<std::size_t>(y) * w + x) * 2];
      flow.v(y, x) = buf[(static_cast<std::size_t>(y) * w + x) * 2 + 1];
    }
  return flow;
}

void write_flo(const fs::path& path, const FlowField& flow) {
  if (!flow.u.isFinite().all() || !flow.v.isFinite().all())
    throw std::invalid_argument("write_flo: flow has non-finite entries");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_flo: cannot open " + path.string());
  const std::int32_t w = flow.width();
  const std::int32_t h = flow.height();
  f.write(reinterpret_cast<const char*>(&kFloMagic), sizeof(kFloMagic));
  f.write(reinterpret_cast<const char*>(&w), sizeof(w));
  f.write(reinterpret_cast<const char*>(&h), sizeof(h));
  std::vector<float> buf(static_cast<std::size_t>(w) * h * 2);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      buf[(static_cast<std::size_t>(y) * w + x) * 2] = static_cast<float>(flow.u(y, x));
      buf[(static_cast<std::size_t>(y) * w + x) * 2 + 1] = static_cast<float>(flow.v(y, x));
    }
  f.write(reinterpret_cast<const char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!f) throw std::runtime_error("write_flo: write failed for " + path.string());
}

}  // namespace mopflow
