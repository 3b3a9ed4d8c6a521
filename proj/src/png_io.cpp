#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "splatgeo/error.hpp"
#include "splatgeo/scene_io.hpp"

namespace splatgeo {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_error_handler(png_structp png, png_const_charp message) {
  auto* text = static_cast<std::string*>(png_get_error_ptr(png));
  if (text) *text = message;
  png_longjmp(png, 1);
}

void png_warning_handler(png_structp, png_const_charp) {}

// Fixed encoder settings: no timestamps or text chunks, so equal pixels give
// equal bytes.
void write_png(const std::filesystem::path& path, int width, int height, int color_type, int bit_depth,
               const std::vector<std::uint8_t>& rows_bytes) {
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw Error(ErrorKind::IoFailure, "cannot open " + path.string() + " for writing");
  std::string message;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler, png_warning_handler);
  if (!png) throw Error(ErrorKind::IoFailure, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorKind::IoFailure, "png_create_info_struct failed");
  }
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const size_t stride = static_cast<size_t>(width) * channels * (bit_depth / 8);
  std::vector<png_bytep> rows(static_cast<size_t>(height));
  for (int y = 0; y < height; ++y) {
    rows[y] = const_cast<png_bytep>(rows_bytes.data() + static_cast<size_t>(y) * stride);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorKind::IoFailure, "writing " + path.string() + ": " + message);
  }
  png_init_io(png, file.get());
  png_set_compression_level(png, 6);
  png_set_filter(png, 0, PNG_FILTER_NONE);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (bit_depth == 16) png_set_swap(png);  // rows are little-endian in memory
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void write_png_rgb(const Image& image, const std::filesystem::path& path) {
  if (image.channels != 3) throw Error(ErrorKind::InvalidArgument, "write_png_rgb needs a 3-channel image");
  std::vector<std::uint8_t> bytes(image.data.size());
  std::transform(image.data.begin(), image.data.end(), bytes.begin(), to_byte);
  write_png(path, image.width, image.height, PNG_COLOR_TYPE_RGB, 8, bytes);
}

void write_png_gray8(const DepthMap& values, const std::filesystem::path& path) {
  std::vector<std::uint8_t> bytes(values.data.size());
  std::transform(values.data.begin(), values.data.end(), bytes.begin(), to_byte);
  write_png(path, values.width, values.height, PNG_COLOR_TYPE_GRAY, 8, bytes);
}

void write_png_gray16(const std::vector<std::uint16_t>& values, int width, int height,
                      const std::filesystem::path& path) {
  if (values.size() != static_cast<size_t>(width) * height) {
    throw Error(ErrorKind::ShapeMismatch, "write_png_gray16: value count does not match size");
  }
  std::vector<std::uint8_t> bytes(values.size() * 2);
  for (size_t i = 0; i < values.size(); ++i) {
    bytes[2 * i] = static_cast<std::uint8_t>(values[i] & 0xff);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(values[i] >> 8);
  }
  write_png(path, width, height, PNG_COLOR_TYPE_GRAY, 16, bytes);
}

PngImage read_png(const std::filesystem::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw Error(ErrorKind::CorruptImage, "cannot open " + path.string());
  unsigned char signature[8] = {};
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw Error(ErrorKind::CorruptImage, path.string() + " is not a PNG file");
  }
  std::string message;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &message, png_error_handler, png_warning_handler);
  if (!png) throw Error(ErrorKind::IoFailure, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorKind::IoFailure, "png_create_info_struct failed");
  }
  PngImage out;
  std::vector<std::uint8_t> bytes;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorKind::CorruptImage, "reading " + path.string() + ": " + message);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const int color_type = png_get_color_type(png, info);
  int bit_depth = png_get_bit_depth(png, info);
  if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color_type & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png), png_set_strip_alpha(png);
  if (bit_depth == 16) png_set_swap(png);
  png_read_update_info(png, info);
  out.width = static_cast<int>(png_get_image_width(png, info));
  out.height = static_cast<int>(png_get_image_height(png, info));
  out.channels = png_get_channels(png, info);
  out.bit_depth = png_get_bit_depth(png, info);
  bit_depth = out.bit_depth;
  const size_t stride = png_get_rowbytes(png, info);
  bytes.resize(stride * static_cast<size_t>(out.height));
  std::vector<png_bytep> rows(static_cast<size_t>(out.height));
  for (int y = 0; y < out.height; ++y) rows[y] = bytes.data() + static_cast<size_t>(y) * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  const size_t count = static_cast<size_t>(out.width) * out.height * out.channels;
  out.samples.resize(count);
  for (int y = 0; y < out.height; ++y) {
    const std::uint8_t* row = bytes.data() + static_cast<size_t>(y) * stride;
    const size_t per_row = static_cast<size_t>(out.width) * out.channels;
    for (size_t i = 0; i < per_row; ++i) {
      out.samples[y * per_row + i] = bit_depth == 16 ? static_cast<std::uint16_t>(row[2 * i] | (row[2 * i + 1] << 8))
                                                     : row[i];
    }
  }
  return out;
}

Image png_to_image(const PngImage& png) {
  Image img(png.width, png.height, 3);
  const double scale = png.bit_depth == 16 ? 65535.0 : 255.0;
  for (size_t p = 0; p < static_cast<size_t>(png.width) * png.height; ++p) {
    for (int c = 0; c < 3; ++c) {
      const int src = png.channels >= 3 ? c : 0;
      img.data[p * 3 + c] = png.samples[p * png.channels + src] / scale;
    }
  }
  return img;
}

std::vector<std::uint16_t> depth_to_millimeters(const DepthMap& depth) {
  std::vector<std::uint16_t> out(depth.data.size());
  for (size_t i = 0; i < out.size(); ++i) {
    const double mm = std::isfinite(depth.data[i]) ? std::round(depth.data[i] * 1000.0) : 0.0;
    out[i] = static_cast<std::uint16_t>(std::clamp(mm, 0.0, 65535.0));
  }
  return out;
}

}  // namespace splatgeo
