#include <doctest.h>

#include <cstddef>
#include <cstdio>

#include <jpeglib.h>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "mopflow/dataset_io.hpp"
#include "mopflow/image_codec.hpp"
#include "mopflow/selftest.hpp"

using namespace mopflow;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// test-side JPEG encoder so the decode path gets exercised
void write_jpeg_gray(const fs::path& path, const Grid& img, int quality) {
  jpeg_compress_struct cinfo;
  jpeg_error_mgr jerr;
  cinfo.err = jpeg_std_error(&jerr);
  jpeg_create_compress(&cinfo);
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  REQUIRE(f != nullptr);
  jpeg_stdio_dest(&cinfo, f);
  cinfo.image_width = static_cast<JDIMENSION>(img.cols());
  cinfo.image_height = static_cast<JDIMENSION>(img.rows());
  cinfo.input_components = 1;
  cinfo.in_color_space = JCS_GRAYSCALE;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  std::vector<JSAMPLE> row(static_cast<std::size_t>(img.cols()));
  while (cinfo.next_scanline < cinfo.image_height) {
    for (long x = 0; x < img.cols(); ++x)
      row[static_cast<std::size_t>(x)] = static_cast<JSAMPLE>(
          std::clamp(std::lround(img(cinfo.next_scanline, x) * 255.0), 0L, 255L));
    JSAMPROW ptr = row.data();
    jpeg_write_scanlines(&cinfo, &ptr, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  std::fclose(f);
}

FlowField random_float_flow(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  FlowField f = FlowField::zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      // float32-representable values round-trip bitwise through the codec
      f.u(y, x) = static_cast<float>(20.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5));
      f.v(y, x) = static_cast<float>(20.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5));
    }
  return f;
}

void make_davis_tree(const fs::path& root, const std::vector<std::string>& sequences, int frames,
                     bool with_annotations) {
  for (const auto& seq : sequences) {
    const fs::path fdir = root / "JPEGImages" / "480p" / seq;
    const fs::path adir = root / "Annotations" / "480p" / seq;
    fs::create_directories(fdir);
    if (with_annotations) fs::create_directories(adir);
    for (int t = 0; t < frames; ++t) {
      char name[16];
      std::snprintf(name, sizeof(name), "%05d", t);
      write_png_gray(fdir / (std::string(name) + ".png"), Grid::Constant(20, 30, 0.25 + 0.1 * t));
      if (with_annotations) {
        BinaryMask ann = BinaryMask::Constant(20, 30, false);
        ann.block(5, 5, 5, 5).setConstant(true);
        write_mask_png(adir / (std::string(name) + ".png"), ann);
      }
    }
  }
}

}  // namespace

TEST_CASE("flo codec") {
  TempDir dir("mopflow_flo_test");

  SUBCASE("round trips bitwise") {
    for (int trial = 0; trial < 20; ++trial) {
      const FlowField f = random_float_flow(5, 7, 100 + static_cast<std::uint64_t>(trial));
      const fs::path p = dir.path / "field.flo";
      write_flo(p, f);
      const FlowField g = read_flo(p);
      CHECK((f.u == g.u).all());
      CHECK((f.v == g.v).all());
    }
  }

  SUBCASE("2x2 zero field occupies exactly 44 bytes") {
    const fs::path p = dir.path / "zero.flo";
    write_flo(p, FlowField::zero(2, 2));
    CHECK(fs::file_size(p) == 44);
  }

  SUBCASE("bad magic is rejected") {
    const fs::path p = dir.path / "bad.flo";
    std::ofstream f(p, std::ios::binary);
    const float zero = 0.0f;
    const std::int32_t dims[2] = {2, 2};
    f.write(reinterpret_cast<const char*>(&zero), 4);
    f.write(reinterpret_cast<const char*>(dims), 8);
    f.close();
    CHECK_THROWS_WITH_AS(read_flo(p), doctest::Contains("bad magic"), std::runtime_error);
  }

  SUBCASE("truncated payload is rejected") {
    const fs::path p = dir.path / "trunc.flo";
    write_flo(p, FlowField::zero(4, 4));
    fs::resize_file(p, 20);
    CHECK_THROWS_WITH_AS(read_flo(p), doctest::Contains("truncated"), std::runtime_error);
  }

  SUBCASE("non-finite flow is rejected on write") {
    FlowField f = FlowField::zero(2, 2);
    f.u(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(write_flo(dir.path / "nan.flo", f), std::invalid_argument);
  }
}

TEST_CASE("png masks and images") {
  TempDir dir("mopflow_png_test");

  SUBCASE("mask round trip") {
    std::mt19937_64 rng(7);
    BinaryMask m(13, 9);
    for (int y = 0; y < 13; ++y)
      for (int x = 0; x < 9; ++x) m(y, x) = (rng() & 1) != 0;
    const fs::path p = dir.path / "mask.png";
    write_mask_png(p, m);
    CHECK((read_mask_png(p) == m).all());
  }

  SUBCASE("gray png read back within quantization") {
    const Grid img = synth::smooth_texture(12, 17, 3);
    const fs::path p = dir.path / "gray.png";
    write_png_gray(p, img);
    const Image back = read_image(p);
    REQUIRE(back.channels() == 1);
    CHECK((back.gray() - img).cwiseAbs().maxCoeff() <= 0.5 / 255.0 + 1e-12);
  }

  SUBCASE("rgb png read back within quantization") {
    Image img(synth::smooth_texture(8, 9, 4), synth::smooth_texture(8, 9, 5),
              synth::smooth_texture(8, 9, 6));
    const fs::path p = dir.path / "rgb.png";
    write_png_rgb(p, img);
    const Image back = read_image(p);
    REQUIRE(back.channels() == 3);
    for (int c = 0; c < 3; ++c)
      CHECK((back.planes[c] - img.planes[c]).cwiseAbs().maxCoeff() <= 0.5 / 255.0 + 1e-12);
  }

  SUBCASE("jpeg decode path") {
    const Grid img = synth::smooth_texture(16, 24, 5);
    const fs::path p = dir.path / "frame.jpg";
    write_jpeg_gray(p, img, 95);
    const Image back = read_image(p);
    REQUIRE(back.channels() == 1);
    CHECK((back.gray() - img).cwiseAbs().maxCoeff() < 0.08);  // lossy codec
  }
}

TEST_CASE("davis index") {
  TempDir dir("mopflow_davis_test");
  make_davis_tree(dir.path, {"bear", "bus"}, 3, true);

  SUBCASE("indexes sequences and frames in order") {
    const DatasetIndex index = load_davis_index(dir.path);
    REQUIRE(index.sequences.size() == 2);
    CHECK(index.sequences[0].name == "bear");
    CHECK(index.sequences[1].name == "bus");
    REQUIRE(index.sequences[0].frames.size() == 3);
    CHECK(index.sequences[0].frames[0].stem() == "00000");
    CHECK(index.sequences[0].frames[2].stem() == "00002");
    CHECK(index.sequences[0].annotations.size() == 3);
  }

  SUBCASE("split list filters") {
    const fs::path split = dir.path / "val.txt";
    std::ofstream(split) << "bus\n";
    const DatasetIndex index = load_davis_index(dir.path, split);
    REQUIRE(index.sequences.size() == 1);
    CHECK(index.sequences[0].name == "bus");
  }

  SUBCASE("split naming an unknown sequence is rejected") {
    const fs::path split = dir.path / "bad.txt";
    std::ofstream(split) << "zebra\n";
    CHECK_THROWS_AS(load_davis_index(dir.path, split), std::runtime_error);
  }

  SUBCASE("annotation count mismatch is reported with the sequence name") {
    fs::remove(dir.path / "Annotations" / "480p" / "bus" / "00002.png");
    CHECK_THROWS_WITH_AS(load_davis_index(dir.path), doctest::Contains("bus"),
                         std::runtime_error);
  }

  SUBCASE("empty sequence directory is rejected") {
    fs::create_directories(dir.path / "JPEGImages" / "480p" / "empty_seq");
    CHECK_THROWS_WITH_AS(load_davis_index(dir.path), doctest::Contains("empty_seq"),
                         std::runtime_error);
  }

  SUBCASE("missing root is rejected") {
    CHECK_THROWS_AS(load_davis_index(dir.path / "nope"), std::runtime_error);
  }
}

TEST_CASE("load_frame_pair") {
  TempDir dir("mopflow_pair_test");
  make_davis_tree(dir.path, {"bear"}, 3, false);
  const DatasetIndex index = load_davis_index(dir.path);

  auto [a, b] = load_frame_pair(index, "bear", 0);
  CHECK(a.height() == kWorkHeight);
  CHECK(a.width() == kWorkWidth);
  CHECK(b.height() == kWorkHeight);
  CHECK(b.width() == kWorkWidth);
  CHECK(a.gray().minCoeff() >= 0.0);
  CHECK(a.gray().maxCoeff() <= 1.0);
  // constant frames decode and resize to constants
  CHECK((a.gray() - a.gray()(0, 0)).cwiseAbs().maxCoeff() < 1e-12);

  CHECK_THROWS_AS(load_frame_pair(index, "bear", 2), std::invalid_argument);
  CHECK_THROWS_AS(load_frame_pair(index, "bear", -1), std::invalid_argument);
}

TEST_CASE("binarize_annotation") {
  TempDir dir("mopflow_ann_test");

  SUBCASE("all-zero annotation is background") {
    const fs::path p = dir.path / "zero.png";
    write_png_gray(p, Grid::Zero(20, 20));
    CHECK(binarize_annotation(p).count() == 0);
  }

  SUBCASE("any nonzero label is foreground") {
    // labels {0,1,2} as raw gray bytes
    Grid labels = Grid::Zero(20, 20);
    labels.block(0, 0, 10, 20).setConstant(1.0 / 255.0);
    labels.block(10, 0, 5, 20).setConstant(2.0 / 255.0);
    const fs::path p = dir.path / "multi.png";
    write_png_gray(p, labels);
    const BinaryMask mask = binarize_annotation(p);
    CHECK(mask.rows() == kWorkHeight);
    CHECK(mask.cols() == kWorkWidth);
    const double frac = static_cast<double>(mask.count()) / (kWorkHeight * kWorkWidth);
    CHECK(frac == doctest::Approx(0.75).epsilon(0.02));
  }

  SUBCASE("nearest resize preserves the area ratio within two percent") {
    Grid labels = Grid::Zero(100, 100);
    labels.block(0, 0, 50, 100).setConstant(1.0 / 255.0);
    const fs::path p = dir.path / "half.png";
    write_png_gray(p, labels);
    const BinaryMask mask = binarize_annotation(p);
    const double frac = static_cast<double>(mask.count()) / (kWorkHeight * kWorkWidth);
    CHECK(std::abs(frac - 0.5) < 0.02);
  }
}
