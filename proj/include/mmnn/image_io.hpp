// Copyright 2026 The MMNN Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

// PGM/PPM (binary P5/P6, maxval 255) and PNG codecs. Decoded colour images
// are converted to HSV; masks are thresholded at 128.

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <csetjmp>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "mmnn/error.hpp"
#include "mmnn/image.hpp"

namespace mmnn {

/// 8-bit interleaved raster as stored on disk.
struct Raster8 {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<std::uint8_t> data;
};

namespace detail {

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

class PnmTokenizer {
 public:
  explicit PnmTokenizer(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  int next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(bytes_[pos_])) throw Error(ErrorCode::ParseError, "bad PNM header");
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      value = value * 10 + (bytes_[pos_++] - '0');
      if (value > (1L << 30)) throw Error(ErrorCode::ParseError, "PNM header value too large");
    }
    return static_cast<int>(value);
  }

  // Exactly one whitespace byte separates the header from the raster.
  std::size_t raster_start() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) throw Error(ErrorCode::ParseError, "bad PNM header");
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 2;
};

struct PngReadState {
  const std::vector<std::uint8_t>* bytes;
  std::size_t pos;
};

inline void png_read_callback(png_structp png, png_bytep out, png_size_t length) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + length > st->bytes->size()) png_error(png, "truncated PNG stream");
  std::memcpy(out, st->bytes->data() + st->pos, length);
  st->pos += length;
}

inline void png_write_callback(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

inline void png_flush_callback(png_structp) {}


}  // namespace detail

inline bool is_png(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 8 && png_sig_cmp(bytes.data(), 0, 8) == 0;
}

inline Raster8 decode_pnm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '6')) {
    throw Error(ErrorCode::ParseError, "not a binary PGM/PPM (P5/P6) stream");
  }
  detail::PnmTokenizer tok(bytes);
  Raster8 r;
  r.channels = bytes[1] == '6' ? 3 : 1;
  r.width = tok.next_int();
  r.height = tok.next_int();
  const int maxval = tok.next_int();
  if (maxval != 255) throw Error(ErrorCode::ParseError, "only maxval 255 is supported");
  if (r.width <= 0 || r.height <= 0) throw Error(ErrorCode::ParseError, "empty PNM raster");
  const std::size_t start = tok.raster_start();
  const std::size_t n = static_cast<std::size_t>(r.width) * r.height * r.channels;
  if (bytes.size() < start + n) throw Error(ErrorCode::ParseError, "truncated PNM raster");
  r.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(start),
                bytes.begin() + static_cast<std::ptrdiff_t>(start + n));
  return r;
}

inline std::vector<std::uint8_t> encode_pnm(const Raster8& r) {
  const std::string header = std::string(r.channels == 3 ? "P6" : "P5") + "\n" + std::to_string(r.width) + " " +
                             std::to_string(r.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), r.data.begin(), r.data.end());
  return out;
}

/// Decodes any PNG into 8-bit gray or RGB (alpha dropped, 16-bit stripped).
inline Raster8 decode_png(const std::vector<std::uint8_t>& bytes) {
  if (!is_png(bytes)) throw Error(ErrorCode::ParseError, "not a PNG stream");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::ParseError, "png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error(ErrorCode::ParseError, "png_create_info_struct failed");
  }
  detail::PngReadState state{&bytes, 0};
  Raster8 r;
  std::vector<png_bytep> rows;
  // libpng reports errors by longjmp; everything with a destructor lives
  // above this point.
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::ParseError, "corrupt PNG stream");
  }
  png_set_read_fn(png, &state, detail::png_read_callback);
  png_read_info(png, info);
  const png_byte color = png_get_color_type(png, info);
  const png_byte depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  png_set_strip_alpha(png);
  png_read_update_info(png, info);
  r.width = static_cast<int>(png_get_image_width(png, info));
  r.height = static_cast<int>(png_get_image_height(png, info));
  r.channels = png_get_channels(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  if ((r.channels != 1 && r.channels != 3) || stride != static_cast<std::size_t>(r.width) * r.channels) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::ParseError, "unsupported PNG channel layout");
  }
  r.data.resize(stride * r.height);
  rows.resize(r.height);
  for (int y = 0; y < r.height; ++y) rows[y] = r.data.data() + y * stride;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return r;
}

inline std::vector<std::uint8_t> encode_png(const Raster8& r) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error(ErrorCode::ParseError, "png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error(ErrorCode::ParseError, "png_create_info_struct failed");
  }
  std::vector<std::uint8_t> out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::ParseError, "PNG encoding failed");
  }
  png_set_write_fn(png, &out, detail::png_write_callback, detail::png_flush_callback);
  png_set_IHDR(png, info, static_cast<png_uint_32>(r.width), static_cast<png_uint_32>(r.height), 8,
               r.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(r.width) * r.channels;
  for (int y = 0; y < r.height; ++y) png_write_row(png, r.data.data() + y * stride);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

inline Raster8 decode_raster(const std::vector<std::uint8_t>& bytes) {
  return is_png(bytes) ? decode_png(bytes) : decode_pnm(bytes);
}

inline Raster8 read_raster(const std::filesystem::path& path) { return decode_raster(detail::read_file_bytes(path)); }

/// Colour rasters become HSV images; gray rasters stay single-channel.
inline Image raster_to_image(const Raster8& r) {
  std::vector<double> data(r.data.size());
  for (std::size_t i = 0; i < r.data.size(); ++i) data[i] = r.data[i] / 255.0;
  Image img(r.width, r.height, r.channels, std::move(data));
  return r.channels == 3 ? to_hsv(img) : img;
}

inline BinaryMask raster_to_mask(const Raster8& r) {
  BinaryMask m(r.width, r.height);
  for (std::size_t i = 0; i < m.pixel_count(); ++i) {
    // Colour masks: any channel >= 128 marks the pixel as object.
    bool on = false;
    for (int c = 0; c < r.channels; ++c) on = on || r.data[i * r.channels + c] >= 128;
    m.set(i, on);
  }
  return m;
}

inline Raster8 mask_to_raster(const BinaryMask& m) {
  Raster8 r{m.width(), m.height(), 1, std::vector<std::uint8_t>(m.pixel_count())};
  for (std::size_t i = 0; i < m.pixel_count(); ++i) r.data[i] = m[i] ? 255 : 0;
  return r;
}

/// Samples clamped to [0,1] and quantised to 8 bits.
inline Raster8 values_to_raster(int width, int height, std::span<const double> values) {
  Raster8 r{width, height, 1, std::vector<std::uint8_t>(values.size())};
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::clamp(values[i], 0.0, 1.0);
    r.data[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return r;
}

/// Inverse of raster_to_image's quantisation for RGB input; used to write
/// synthetic scenes to disk.
inline Raster8 rgb_to_raster(int width, int height, std::span<const double> rgb) {
  Raster8 r{width, height, 3, std::vector<std::uint8_t>(rgb.size())};
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    r.data[i] = static_cast<std::uint8_t>(std::lround(std::clamp(rgb[i], 0.0, 1.0) * 255.0));
  }
  return r;
}

inline Image read_image(const std::filesystem::path& path) { return raster_to_image(read_raster(path)); }
inline BinaryMask read_mask(const std::filesystem::path& path) { return raster_to_mask(read_raster(path)); }

inline void write_pnm(const std::filesystem::path& path, const Raster8& r) {
  detail::write_file_bytes(path, encode_pnm(r));
}
inline void write_png(const std::filesystem::path& path, const Raster8& r) {
  detail::write_file_bytes(path, encode_png(r));
}
inline void write_mask_pgm(const std::filesystem::path& path, const BinaryMask& m) {
  write_pnm(path, mask_to_raster(m));
}

}  // namespace mmnn
