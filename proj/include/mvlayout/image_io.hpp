#pragma once

#include <png.h>

#include <array>
#include <csetjmp>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "errors.hpp"
#include "raster.hpp"

namespace mvl::io {

namespace detail {

struct FileCloser {
  void operator()(std::FILE* f) const { if (f) std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open(const std::filesystem::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) throw IoError("cannot open '" + path.string() + "'");
  return f;
}

[[noreturn]] inline void png_fail(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  std::longjmp(png_jmpbuf(png), 1);
}

inline void png_warn(png_structp, png_const_charp) {}

// Writes 8-bit rows; channels is 1 (gray) or 3 (RGB).
inline void write_png(const std::filesystem::path& path, int width, int height, int channels,
                      const std::uint8_t* data) {
  auto file = open(path, "wb");
  std::string err;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError("libpng initialisation failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError("writing '" + path.string() + "': " + err);
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, 8, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels;
  for (int v = 0; v < height; ++v)
    png_write_row(png, const_cast<png_bytep>(data + v * stride));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

// Reads any 8-bit PNG, converted to `channels` (1 or 3) channels.
inline std::vector<std::uint8_t> read_png(const std::filesystem::path& path, int channels,
                                          int& width, int& height) {
  auto file = open(path, "rb");
  std::array<unsigned char, 8> sig{};
  if (std::fread(sig.data(), 1, sig.size(), file.get()) != sig.size() ||
      png_sig_cmp(sig.data(), 0, sig.size()) != 0)
    throw IoError("'" + path.string() + "' is not a PNG file");
  std::string err;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("libpng initialisation failed");
  }
  std::vector<std::uint8_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("reading '" + path.string() + "': " + err);
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, static_cast<int>(sig.size()));
  png_read_info(png, info);
  const auto color = png_get_color_type(png, info);
  if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8)
    png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  const bool is_gray = !(color & PNG_COLOR_MASK_COLOR) && color != PNG_COLOR_TYPE_PALETTE;
  if (channels == 3 && is_gray) png_set_gray_to_rgb(png);
  if (channels == 1 && !is_gray) png_set_rgb_to_gray_fixed(png, 1, -1, -1);
  png_read_update_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  if (static_cast<int>(png_get_channels(png, info)) != channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError("'" + path.string() + "': unsupported PNG channel layout");
  }
  out.resize(static_cast<std::size_t>(width) * height * channels);
  std::vector<png_bytep> rows(height);
  for (int v = 0; v < height; ++v) rows[v] = out.data() + static_cast<std::size_t>(v) * width * channels;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

}  // namespace detail

inline void write_png(const std::filesystem::path& path, const Raster<std::uint8_t>& img) {
  detail::write_png(path, img.width(), img.height(), 1, img.pixels().data());
}

inline void write_png(const std::filesystem::path& path, const RgbImage& img) {
  detail::write_png(path, img.width(), img.height(), 3,
                    reinterpret_cast<const std::uint8_t*>(img.pixels().data()));
}

inline Raster<std::uint8_t> read_png_gray(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto bytes = detail::read_png(path, 1, w, h);
  Raster<std::uint8_t> out(w, h);
  std::memcpy(out.pixels().data(), bytes.data(), bytes.size());
  return out;
}

inline RgbImage read_png_rgb(const std::filesystem::path& path) {
  int w = 0, h = 0;
  auto bytes = detail::read_png(path, 3, w, h);
  RgbImage out(w, h);
  std::memcpy(reinterpret_cast<std::uint8_t*>(out.pixels().data()), bytes.data(), bytes.size());
  return out;
}

// Float raster file: 16-byte header (8-byte magic, uint32 width, uint32
// height, little endian) followed by row-major float32 samples.
inline constexpr std::array<char, 8> kFloatRasterMagic = {'M', 'V', 'L', 'F', 'L', 'T', '3', '2'};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t x) {
  const unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                              static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4] = {};
  is.read(reinterpret_cast<char*>(b), 4);
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float f) {
  std::uint32_t bits;
  std::memcpy(&bits, &f, 4);
  put_u32(os, bits);
}

inline float get_f32(std::istream& is) {
  const std::uint32_t bits = get_u32(is);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace detail

inline void write_float_raster(const std::filesystem::path& path, const Raster<float>& r) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(kFloatRasterMagic.data(), kFloatRasterMagic.size());
  detail::put_u32(os, static_cast<std::uint32_t>(r.width()));
  detail::put_u32(os, static_cast<std::uint32_t>(r.height()));
  for (float f : r.pixels()) detail::put_f32(os, f);
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

inline Raster<float> read_float_raster(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kFloatRasterMagic) throw IoError("'" + path.string() + "' is not a float raster");
  const auto w = detail::get_u32(is);
  const auto h = detail::get_u32(is);
  if (w > (1u << 16) || h > (1u << 16)) throw IoError("'" + path.string() + "': implausible size");
  Raster<float> r(static_cast<int>(w), static_cast<int>(h));
  for (auto& f : r.pixels()) f = detail::get_f32(is);
  if (!is) throw IoError("'" + path.string() + "' is truncated");
  return r;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os << text;
  if (!os) throw IoError("failed writing '" + path.string() + "'");
}

// Region labels as an 8-bit PNG, one gray value per element index.
inline Raster<std::uint8_t> label_image(const Raster<std::int32_t>& labels) {
  Raster<std::uint8_t> out(labels.width(), labels.height());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] > 255) throw DomainError("label does not fit in 8 bits");
    out[i] = static_cast<std::uint8_t>(labels[i]);
  }
  return out;
}

}  // namespace mvl::io
