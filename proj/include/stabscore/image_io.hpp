#pragma once

// PGM (P2/P5) and PNG reading and writing. Decoded luminance is normalized to [0, 1];
// colour inputs are reduced with the 0.299/0.587/0.114 weights.

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "stabscore/image.hpp"

namespace stabscore {

namespace detail {

inline std::vector<unsigned char> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open file");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline ImageGray decode_pgm(const std::vector<unsigned char>& bytes, const std::string& path) {
  std::size_t pos = 2;
  const bool binary = bytes[1] == '5';
  auto next_token = [&]() -> std::string {
    for (;;) {
      while (pos < bytes.size() && std::isspace(bytes[pos])) ++pos;
      if (pos < bytes.size() && bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    std::string tok;
    while (pos < bytes.size() && !std::isspace(bytes[pos])) tok.push_back(static_cast<char>(bytes[pos++]));
    if (tok.empty()) throw IoError(path + ": truncated PGM header");
    return tok;
  };
  int width = 0, height = 0, maxval = 0;
  try {
    width = std::stoi(next_token());
    height = std::stoi(next_token());
    maxval = std::stoi(next_token());
  } catch (const std::logic_error&) {
    throw IoError(path + ": malformed PGM header");
  }
  if (width < 1 || height < 1) throw IoError(path + ": invalid PGM dimensions");
  if (maxval < 1 || maxval > 65535) throw IoError(path + ": unsupported PGM bit depth");
  const std::size_t count = static_cast<std::size_t>(width) * height;
  std::vector<double> data(count);
  if (binary) {
    ++pos;  // single whitespace after maxval
    const std::size_t bpp = maxval < 256 ? 1 : 2;
    if (bytes.size() < pos + count * bpp) throw IoError(path + ": truncated PGM pixel data");
    for (std::size_t i = 0; i < count; ++i) {
      const unsigned v = bpp == 1 ? bytes[pos + i] : (bytes[pos + 2 * i] << 8) | bytes[pos + 2 * i + 1];
      data[i] = std::min(1.0, static_cast<double>(v) / maxval);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      int v = 0;
      try {
        v = std::stoi(next_token());
      } catch (const std::logic_error&) {
        throw IoError(path + ": malformed PGM pixel value");
      }
      data[i] = std::clamp(static_cast<double>(v) / maxval, 0.0, 1.0);
    }
  }
  return ImageGray(width, height, std::move(data));
}

inline ImageGray decode_png(const std::string& path) {
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "rb"), &std::fclose);
  if (!fp) throw IoError(path + ": cannot open file");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": libpng initialization failed");
  }
  std::vector<double> data;
  int width = 0, height = 0;
  std::vector<png_bytep> rows;
  std::vector<unsigned char> raw;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw IoError(path + ": corrupt PNG");
  }
  png_init_io(png, fp.get());
  png_read_info(png, info);
  width = static_cast<int>(png_get_image_width(png, info));
  height = static_cast<int>(png_get_image_height(png, info));
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // native little-endian u16
  png_read_update_info(png, info);
  const int channels = png_get_channels(png, info);
  const int out_depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  raw.resize(rowbytes * height);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = raw.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  const double maxval = out_depth == 16 ? 65535.0 : 255.0;
  data.resize(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      auto sample = [&](int c) -> double {
        const std::size_t i = static_cast<std::size_t>(x) * channels + c;
        if (out_depth == 16) {
          std::uint16_t v;
          std::memcpy(&v, rows[y] + 2 * i, 2);
          return v / maxval;
        }
        return rows[y][i] / maxval;
      };
      double lum = 0.0;
      if (channels >= 3)
        lum = 0.299 * sample(0) + 0.587 * sample(1) + 0.114 * sample(2);
      else
        lum = sample(0);
      data[static_cast<std::size_t>(y) * width + x] = std::clamp(lum, 0.0, 1.0);
    }
  }
  return ImageGray(width, height, std::move(data));
}

}  // namespace detail

/// Loads an 8/16-bit PGM (P2 or P5) or PNG image as normalized luminance.
inline ImageGray load_image(const std::string& path) {
  const auto bytes = detail::read_file_bytes(path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '2'))
    return detail::decode_pgm(bytes, path);
  static constexpr unsigned char kPngMagic[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() >= 8 && std::equal(kPngMagic, kPngMagic + 8, bytes.begin())) return detail::decode_png(path);
  throw IoError(path + ": unsupported image format (expected PGM P2/P5 or PNG)");
}

/// Writes a binary PGM, quantizing [0, 1] to 8 or 16 bits.
inline void save_pgm(const std::string& path, const ImageGray& img, int bits = 8) {
  if (bits != 8 && bits != 16) throw DomainError("save_pgm supports 8 or 16 bits");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot write file");
  const int maxval = bits == 8 ? 255 : 65535;
  out << "P5\n" << img.width() << ' ' << img.height() << '\n' << maxval << '\n';
  for (double v : img.data()) {
    const auto q = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * maxval));
    if (bits == 16) out.put(static_cast<char>(q >> 8));
    out.put(static_cast<char>(q & 0xFF));
  }
  if (!out) throw IoError(path + ": write failed");
}

/// Writes a grayscale PNG with 8 or 16 bits per sample.
inline void save_png(const std::string& path, const ImageGray& img, int bits = 8) {
  if (bits != 8 && bits != 16) throw DomainError("save_png supports 8 or 16 bits");
  std::unique_ptr<std::FILE, int (*)(std::FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw IoError(path + ": cannot write file");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path + ": libpng initialization failed");
  }
  const int w = img.width(), h = img.height();
  const int bpp = bits / 8;
  std::vector<unsigned char> raw(static_cast<std::size_t>(w) * h * bpp);
  const double maxval = bits == 8 ? 255.0 : 65535.0;
  for (std::size_t i = 0; i < img.data().size(); ++i) {
    const auto q = static_cast<unsigned>(std::lround(std::clamp(img.data()[i], 0.0, 1.0) * maxval));
    if (bits == 8) {
      raw[i] = static_cast<unsigned char>(q);
    } else {
      raw[2 * i] = static_cast<unsigned char>(q >> 8);
      raw[2 * i + 1] = static_cast<unsigned char>(q & 0xFF);
    }
  }
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y) rows[y] = raw.data() + static_cast<std::size_t>(y) * w * bpp;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoError(path + ": PNG encoding failed");
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, w, h, bits, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace stabscore
