#include "mopflow/image_codec.hpp"

#include <cstddef>
#include <cstdio>

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <vector>

namespace mopflow {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw std::runtime_error("cannot open " + path.string());
  return f;
}

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext;
}

struct PngReader {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReader() { png_destroy_read_struct(&png, &info, nullptr); }
};

struct PngWriter {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriter() { png_destroy_write_struct(&png, &info); }
};

// Decodes rows of 8-bit samples; `expand_to_intensity` turns palettes into
// RGB (frames), otherwise palette indices are kept (annotations).
std::vector<std::vector<png_byte>> read_png_rows(const std::filesystem::path& path,
                                                 bool expand_to_intensity, int& width,
                                                 int& height, int& channels) {
  FilePtr fp = open_file(path, "rb");
  PngReader r;
  r.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!r.png) throw std::runtime_error("png: allocation failure");
  r.info = png_create_info_struct(r.png);
  if (!r.info) throw std::runtime_error("png: allocation failure");
  if (setjmp(png_jmpbuf(r.png))) throw std::runtime_error("png: decode failure in " + path.string());
  png_init_io(r.png, fp.get());
  png_read_info(r.png, r.info);

  const png_byte color_type = png_get_color_type(r.png, r.info);
  const png_byte bit_depth = png_get_bit_depth(r.png, r.info);
  if (expand_to_intensity) {
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(r.png);
    if (png_get_valid(r.png, r.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png);
    if (bit_depth == 16) png_set_strip_16(r.png);
    png_set_strip_alpha(r.png);
  } else {
    if (color_type == PNG_COLOR_TYPE_PALETTE || bit_depth < 8) png_set_packing(r.png);
    if (bit_depth == 16) png_set_strip_16(r.png);
    png_set_strip_alpha(r.png);
  }
  png_read_update_info(r.png, r.info);

  width = static_cast<int>(png_get_image_width(r.png, r.info));
  height = static_cast<int>(png_get_image_height(r.png, r.info));
  channels = png_get_channels(r.png, r.info);
  const std::size_t rowbytes = png_get_rowbytes(r.png, r.info);

  std::vector<std::vector<png_byte>> rows(static_cast<std::size_t>(height));
  std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[static_cast<std::size_t>(y)].resize(rowbytes);
    row_ptrs[static_cast<std::size_t>(y)] = rows[static_cast<std::size_t>(y)].data();
  }
  png_read_image(r.png, row_ptrs.data());
  png_read_end(r.png, nullptr);
  return rows;
}

Image read_png_image(const std::filesystem::path& path) {
  int width = 0, height = 0, channels = 0;
  const auto rows = read_png_rows(path, /*expand_to_intensity=*/true, width, height, channels);
  if (channels != 1 && channels != 3)
    throw std::runtime_error("png: unsupported channel count in " + path.string());
  Image img;
  for (int c = 0; c < channels; ++c) img.planes.emplace_back(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c)
        img.planes[c](y, x) = rows[static_cast<std::size_t>(y)][x * channels + c] / 255.0;
  return img;
}

struct JpegErrorMgr {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  std::longjmp(err->jump, 1);
}

Image read_jpeg_image(const std::filesystem::path& path) {
  FilePtr fp = open_file(path, "rb");
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error("jpeg: decode failure in " + path.string());
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, fp.get());
  jpeg_read_header(&cinfo, TRUE);
  jpeg_start_decompress(&cinfo);

  const int width = static_cast<int>(cinfo.output_width);
  const int height = static_cast<int>(cinfo.output_height);
  const int channels = cinfo.output_components;
  if (channels != 1 && channels != 3) {
    jpeg_destroy_decompress(&cinfo);
    throw std::runtime_error("jpeg: unsupported channel count in " + path.string());
  }
  Image img;
  for (int c = 0; c < channels; ++c) img.planes.emplace_back(height, width);
  std::vector<JSAMPLE> row(static_cast<std::size_t>(width) * channels);
  JSAMPROW row_ptr = row.data();
  while (cinfo.output_scanline < cinfo.output_height) {
    const int y = static_cast<int>(cinfo.output_scanline);
    jpeg_read_scanlines(&cinfo, &row_ptr, 1);
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < channels; ++c) img.planes[c](y, x) = row[x * channels + c] / 255.0;
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return img;
}

void write_png_bytes(const std::filesystem::path& path, const std::vector<png_byte>& bytes,
                     int width, int height, int channels) {
  FilePtr fp = open_file(path, "wb");
  PngWriter w;
  w.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!w.png) throw std::runtime_error("png: allocation failure");
  w.info = png_create_info_struct(w.png);
  if (!w.info) throw std::runtime_error("png: allocation failure");
  if (setjmp(png_jmpbuf(w.png))) throw std::runtime_error("png: encode failure for " + path.string());
  png_init_io(w.png, fp.get());
  png_set_IHDR(w.png, w.info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
               8, channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(w.png, w.info);
  std::vector<png_bytep> row_ptrs(static_cast<std::size_t>(height));
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int y = 0; y < height; ++y)
    row_ptrs[static_cast<std::size_t>(y)] = const_cast<png_bytep>(bytes.data() + y * stride);
  png_write_image(w.png, row_ptrs.data());
  png_write_end(w.png, nullptr);
}

png_byte quantize(double v) {
  return static_cast<png_byte>(std::clamp(std::lround(v * 255.0), 0L, 255L));
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
  const std::string ext = lower_extension(path);
  if (ext == ".png") return read_png_image(path);
  if (ext == ".jpg" || ext == ".jpeg") return read_jpeg_image(path);
  throw std::runtime_error("read_image: unsupported extension " + path.string());
}

Plane<int> read_png_labels(const std::filesystem::path& path) {
  int width = 0, height = 0, channels = 0;
  const auto rows = read_png_rows(path, /*expand_to_intensity=*/false, width, height, channels);
  Plane<int> labels(height, width);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      if (channels == 1) {
        labels(y, x) = rows[static_cast<std::size_t>(y)][x];
      } else {
        int any = 0;
        for (int c = 0; c < channels; ++c) any |= rows[static_cast<std::size_t>(y)][x * channels + c];
        labels(y, x) = any != 0 ? 1 : 0;
      }
    }
  return labels;
}

void write_png_gray(const std::filesystem::path& path, const Grid& img) {
  const int h = static_cast<int>(img.rows());
  const int w = static_cast<int>(img.cols());
  std::vector<png_byte> bytes(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) bytes[static_cast<std::size_t>(y) * w + x] = quantize(img(y, x));
  write_png_bytes(path, bytes, w, h, 1);
}

void write_png_rgb(const std::filesystem::path& path, const Image& img) {
  if (img.channels() != 3) throw std::invalid_argument("write_png_rgb: expected 3 channels");
  const int h = img.height();
  const int w = img.width();
  std::vector<png_byte> bytes(static_cast<std::size_t>(h) * w * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c)
        bytes[(static_cast<std::size_t>(y) * w + x) * 3 + c] = quantize(img.planes[c](y, x));
  write_png_bytes(path, bytes, w, h, 3);
}

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
  const int h = static_cast<int>(mask.rows());
  const int w = static_cast<int>(mask.cols());
  std::vector<png_byte> bytes(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      bytes[static_cast<std::size_t>(y) * w + x] = mask(y, x) ? 255 : 0;
  write_png_bytes(path, bytes, w, h, 1);
}

BinaryMask read_mask_png(const std::filesystem::path& path) {
  const Plane<int> labels = read_png_labels(path);
  return labels != 0;
}

}  // namespace mopflow
