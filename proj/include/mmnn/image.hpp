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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mmnn/error.hpp"
#include "mmnn/multiset.hpp"

namespace mmnn {

/// Interleaved image with samples in [0,1]. Colour images hold HSV.
class Image {
 public:
  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0)
      : Image(width, height, channels,
              std::vector<double>(checked_size(width, height, channels), fill)) {}
  Image(int width, int height, int channels, std::vector<double> data)
      : width_(width), height_(height), channels_(channels), data_(std::move(data)) {
    if (data_.size() != checked_size(width, height, channels)) {
      throw Error(ErrorCode::DimensionMismatch, "image data length does not match width*height*channels");
    }
    for (double v : data_) {
      if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, "image sample outside [0,1]");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }
  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width_) * height_; }
  bool contains(int x, int y) const noexcept { return x >= 0 && y >= 0 && x < width_ && y < height_; }

  double at(int x, int y, int c) const { return data_[index(x, y, c)]; }
  void set(int x, int y, int c, double v) {
    if (!(v >= 0.0 && v <= 1.0)) throw Error(ErrorCode::InvalidArgument, "image sample outside [0,1]");
    data_[index(x, y, c)] = v;
  }
  const std::vector<double>& data() const noexcept { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  static std::size_t checked_size(int width, int height, int channels) {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "image dimensions must be positive");
    if (channels != 1 && channels != 3) throw Error(ErrorCode::InvalidArgument, "images have 1 or 3 channels");
    return static_cast<std::size_t>(width) * height * channels;
  }
  std::size_t index(int x, int y, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int width_ = 0;
  int height_ = 0;
  int channels_ = 1;
  std::vector<double> data_;
};

/// Per-pixel object/background labels, row-major, true = object.
class BinaryMask {
 public:
  BinaryMask() = default;
  BinaryMask(int width, int height, bool fill = false)
      : width_(width), height_(height), bits_(static_cast<std::size_t>(width) * height, fill ? 1 : 0) {
    if (width <= 0 || height <= 0) throw Error(ErrorCode::InvalidArgument, "mask dimensions must be positive");
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t pixel_count() const noexcept { return bits_.size(); }

  bool at(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
  void set(int x, int y, bool v) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
  bool operator[](std::size_t i) const { return bits_[i] != 0; }
  void set(std::size_t i, bool v) { bits_[i] = v ? 1 : 0; }

  std::size_t count() const {
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
  }
  BinaryMask complement() const {
    BinaryMask m = *this;
    for (auto& b : m.bits_) b = b ? 0 : 1;
    return m;
  }
  bool same_shape(const BinaryMask& other) const noexcept {
    return width_ == other.width_ && height_ == other.height_;
  }

  friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> bits_;
};

enum class PointRole { Prototype, CounterPrototype };

inline const char* to_string(PointRole role) {
  return role == PointRole::Prototype ? "prototype" : "counter";
}

inline PointRole point_role_from_string(const std::string& s) {
  if (s == "prototype" || s == "proto" || s == "p" || s == "+") return PointRole::Prototype;
  if (s == "counter" || s == "counter-prototype" || s == "counter_prototype" || s == "c" || s == "-") {
    return PointRole::CounterPrototype;
  }
  throw Error(ErrorCode::ParseError, "unknown point role '" + s + "'");
}

struct AnnotatedPoint {
  int x = 0;
  int y = 0;
  PointRole role = PointRole::Prototype;
  std::string class_label;

  friend bool operator==(const AnnotatedPoint&, const AnnotatedPoint&) = default;
};

enum class BorderPolicy { ClampToEdge };

struct FeatureConfig {
  int radius = 3;
  bool sort_within_channel = true;
  BorderPolicy border_policy = BorderPolicy::ClampToEdge;
};

struct Offset {
  int dx = 0;
  int dy = 0;
  friend bool operator==(const Offset&, const Offset&) = default;
};

/// Lattice offsets inside the disc of radius r, row-major (dy outer, dx inner).
inline std::vector<Offset> circular_offsets(int r) {
  if (r < 0) throw Error(ErrorCode::InvalidArgument, "radius must be >= 0");
  std::vector<Offset> offsets;
  for (int dy = -r; dy <= r; ++dy) {
    for (int dx = -r; dx <= r; ++dx) {
      if (dx * dx + dy * dy <= r * r) offsets.push_back({dx, dy});
    }
  }
  return offsets;
}

inline std::size_t mask_size(int r) { return circular_offsets(r).size(); }

inline std::size_t feature_length(const FeatureConfig& cfg, int channels) {
  return mask_size(cfg.radius) * static_cast<std::size_t>(channels);
}

/// Reusable extractor: the offset table is computed once per radius.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(FeatureConfig cfg) : cfg_(cfg), offsets_(circular_offsets(cfg.radius)) {}

  const FeatureConfig& config() const noexcept { return cfg_; }
  std::size_t length(int channels) const noexcept { return offsets_.size() * channels; }

  /// Channel blocks in channel order; out-of-image samples clamp to the
  /// nearest edge pixel; each block optionally sorted ascending.
  std::vector<double> extract_raw(const Image& img, int x, int y) const {
    if (!img.contains(x, y)) {
      throw Error(ErrorCode::OutOfBounds, "pixel (" + std::to_string(x) + "," + std::to_string(y) +
                                              ") outside " + std::to_string(img.width()) + "x" +
                                              std::to_string(img.height()) + " image");
    }
    const std::size_t block = offsets_.size();
    std::vector<double> out(block * img.channels());
    for (int c = 0; c < img.channels(); ++c) {
      double* dst = out.data() + c * block;
      for (std::size_t k = 0; k < block; ++k) {
        const int px = std::clamp(x + offsets_[k].dx, 0, img.width() - 1);
        const int py = std::clamp(y + offsets_[k].dy, 0, img.height() - 1);
        dst[k] = img.at(px, py, c);
      }
      if (cfg_.sort_within_channel) std::sort(dst, dst + block);
    }
    return out;
  }

  FeatureVector extract(const Image& img, int x, int y) const { return FeatureVector(extract_raw(img, x, y)); }

 private:
  FeatureConfig cfg_;
  std::vector<Offset> offsets_;
};

inline FeatureVector extract_features(const Image& img, int x, int y, const FeatureConfig& cfg) {
  return FeatureExtractor(cfg).extract(img, x, y);
}

/// Nearest-neighbour decimation: keeps pixels whose coordinates are multiples
/// of factor. Output dimensions are ceil(N / factor).
inline Image subsample(const Image& img, int factor) {
  if (factor < 1) throw Error(ErrorCode::InvalidArgument, "subsample factor must be >= 1");
  if (factor == 1) return img;
  const int w = (img.width() + factor - 1) / factor;
  const int h = (img.height() + factor - 1) / factor;
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(w) * h * img.channels());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < img.channels(); ++c) data.push_back(img.at(x * factor, y * factor, c));
    }
  }
  return Image(w, h, img.channels(), std::move(data));
}

inline BinaryMask subsample(const BinaryMask& mask, int factor) {
  if (factor < 1) throw Error(ErrorCode::InvalidArgument, "subsample factor must be >= 1");
  if (factor == 1) return mask;
  const int w = (mask.width() + factor - 1) / factor;
  const int h = (mask.height() + factor - 1) / factor;
  BinaryMask out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) out.set(x, y, mask.at(x * factor, y * factor));
  }
  return out;
}

/// Point coordinates follow the image under decimation (divided, rounded down).
inline AnnotatedPoint subsample(const AnnotatedPoint& p, int factor) {
  if (factor < 1) throw Error(ErrorCode::InvalidArgument, "subsample factor must be >= 1");
  AnnotatedPoint q = p;
  q.x /= factor;
  q.y /= factor;
  return q;
}

struct Hsv {
  double h = 0.0;
  double s = 0.0;
  double v = 0.0;
};

/// RGB in [0,1] to HSV in [0,1]^3 (hue scaled from degrees by 1/360).
inline Hsv rgb_to_hsv(double r, double g, double b) {
  const double hi = std::max({r, g, b});
  const double lo = std::min({r, g, b});
  const double delta = hi - lo;
  Hsv out;
  out.v = hi;
  out.s = hi > 0.0 ? delta / hi : 0.0;
  if (delta > 0.0) {
    double h;
    if (hi == r) {
      h = std::fmod((g - b) / delta, 6.0);
    } else if (hi == g) {
      h = (b - r) / delta + 2.0;
    } else {
      h = (r - g) / delta + 4.0;
    }
    h /= 6.0;
    if (h < 0.0) h += 1.0;
    if (h >= 1.0) h -= 1.0;
    out.h = h;
  }
  return out;
}

/// Converts an interleaved 3-channel RGB image to HSV. Gray images pass through.
inline Image to_hsv(const Image& rgb) {
  if (rgb.channels() == 1) return rgb;
  std::vector<double> data(rgb.data().size());
  for (std::size_t i = 0; i < rgb.pixel_count(); ++i) {
    const double* p = rgb.data().data() + 3 * i;
    const Hsv hsv = rgb_to_hsv(p[0], p[1], p[2]);
    data[3 * i] = hsv.h;
    data[3 * i + 1] = hsv.s;
    data[3 * i + 2] = hsv.v;
  }
  return Image(rgb.width(), rgb.height(), 3, std::move(data));
}

}  // namespace mmnn
