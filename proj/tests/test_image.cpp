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


#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>
#include <set>

#include "mmnn/image.hpp"
#include "mmnn/image_io.hpp"

namespace mmnn {
namespace {

std::size_t brute_force_disc_count(int r) {
  std::size_t n = 0;
  for (int dy = -r - 2; dy <= r + 2; ++dy) {
    for (int dx = -r - 2; dx <= r + 2; ++dx) n += dx * dx + dy * dy <= r * r;
  }
  return n;
}

Image random_image(int w, int h, int channels, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> data(static_cast<std::size_t>(w) * h * channels);
  for (auto& v : data) v = u(rng);
  return Image(w, h, channels, data);
}

TEST(CircularOffsets, Sizes) {
  EXPECT_EQ(circular_offsets(0), (std::vector<Offset>{{0, 0}}));
  EXPECT_EQ(circular_offsets(1).size(), brute_force_disc_count(1));
  EXPECT_EQ(circular_offsets(1).size(), 5u);
  EXPECT_EQ(circular_offsets(3).size(), brute_force_disc_count(3));
  EXPECT_EQ(circular_offsets(3).size(), 29u);
  EXPECT_EQ(circular_offsets(4).size(), brute_force_disc_count(4));
  EXPECT_THROW(circular_offsets(-1), Error);
}

TEST(CircularOffsets, RowMajorOrder) {
  const auto o = circular_offsets(1);
  EXPECT_EQ(o, (std::vector<Offset>{{0, -1}, {-1, 0}, {0, 0}, {1, 0}, {0, 1}}));
}

TEST(CircularOffsets, Symmetric) {
  for (int r = 0; r <= 6; ++r) {
    std::set<std::pair<int, int>> s;
    for (auto o : circular_offsets(r)) s.insert({o.dx, o.dy});
    for (auto [dx, dy] : s) {
      EXPECT_TRUE(s.count({-dx, -dy}));
      EXPECT_TRUE(s.count({dy, dx}));
    }
  }
}

TEST(ExtractFeatures, ConstantImage) {
  const Image img(7, 5, 1, 0.4);
  for (int r : {0, 1, 3}) {
    const FeatureVector f = extract_features(img, 2, 2, {r, true});
    EXPECT_EQ(f.size(), mask_size(r));
    for (double v : f) EXPECT_EQ(v, 0.4);
  }
}

TEST(ExtractFeatures, SinglePixelColour) {
  Image img(3, 3, 3, 0.0);
  img.set(1, 1, 0, 0.1);
  img.set(1, 1, 1, 0.2);
  img.set(1, 1, 2, 0.3);
  EXPECT_EQ(extract_features(img, 1, 1, {0, false}), (FeatureVector{0.1, 0.2, 0.3}));
}

TEST(ExtractFeatures, ClampsAtBorderAndSorts) {
  const Image img(3, 1, 1, std::vector<double>{0.1, 0.5, 0.9});
  // Offsets (0,-1),(-1,0),(0,0),(1,0),(0,1) clamp to x = 0,0,0,1,0.
  EXPECT_EQ(extract_features(img, 0, 0, {1, false}), (FeatureVector{0.1, 0.1, 0.1, 0.5, 0.1}));
  EXPECT_EQ(extract_features(img, 0, 0, {1, true}), (FeatureVector{0.1, 0.1, 0.1, 0.1, 0.5}));
}

TEST(ExtractFeatures, OutOfBounds) {
  const Image img(4, 4, 1, 0.5);
  try {
    extract_features(img, 4, 0, {1, true});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::OutOfBounds);
  }
}

TEST(ExtractFeatures, LengthAndRangeProperty) {
  const Image img = random_image(9, 6, 3, 5);
  for (int r = 0; r <= 4; ++r) {
    for (int y = 0; y < img.height(); ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const auto f = extract_features(img, x, y, {r, r % 2 == 0});
        ASSERT_EQ(f.size(), mask_size(r) * 3);
        for (double v : f) ASSERT_TRUE(v >= 0.0 && v <= 1.0);
      }
    }
  }
}

// The disc is invariant under the dihedral group, so sorted features are too.
TEST(ExtractFeatures, SortedFeaturesIgnoreRotationAndReflection) {
  const int n = 11, c = 5;
  const Image base = random_image(n, n, 3, 21);
  auto transformed = [&](int kind) {
    std::vector<double> data(base.data().size());
    for (int y = 0; y < n; ++y) {
      for (int x = 0; x < n; ++x) {
        int sx = x, sy = y;
        switch (kind) {
          case 0: sx = y, sy = n - 1 - x; break;   // rotate 90
          case 1: sx = n - 1 - x, sy = n - 1 - y; break;  // rotate 180
          case 2: sx = n - 1 - x; break;            // mirror
          case 3: sx = y, sy = x; break;            // transpose
        }
        for (int ch = 0; ch < 3; ++ch) data[(static_cast<std::size_t>(y) * n + x) * 3 + ch] = base.at(sx, sy, ch);
      }
    }
    return Image(n, n, 3, data);
  };
  const FeatureConfig cfg{4, true};
  const FeatureVector ref = extract_features(base, c, c, cfg);
  for (int kind = 0; kind < 4; ++kind) EXPECT_EQ(extract_features(transformed(kind), c, c, cfg), ref) << kind;
  // Without sorting the order follows the offsets and differs.
  EXPECT_NE(extract_features(transformed(0), c, c, {4, false}), extract_features(base, c, c, {4, false}));
}

TEST(Subsample, Decimation) {
  const Image img = random_image(20, 20, 1, 9);
  EXPECT_EQ(subsample(img, 1), img);
  const Image s = subsample(img, 10);
  ASSERT_EQ(s.width(), 2);
  ASSERT_EQ(s.height(), 2);
  EXPECT_EQ(s.at(0, 0, 0), img.at(0, 0, 0));
  EXPECT_EQ(s.at(1, 0, 0), img.at(10, 0, 0));
  EXPECT_EQ(s.at(0, 1, 0), img.at(0, 10, 0));
  EXPECT_EQ(s.at(1, 1, 0), img.at(10, 10, 0));
  const Image t = subsample(random_image(15, 15, 3, 1), 10);
  EXPECT_EQ(t.width(), 2);
  EXPECT_EQ(t.height(), 2);
  BinaryMask m(15, 15);
  m.set(10, 0, true);
  const BinaryMask ms = subsample(m, 10);
  EXPECT_TRUE(ms.at(1, 0));
  EXPECT_EQ(ms.count(), 1u);
  EXPECT_EQ(subsample(AnnotatedPoint{19, 7, PointRole::Prototype, "a"}, 10).x, 1);
  EXPECT_THROW(subsample(img, 0), Error);
}

TEST(Hsv, KnownColours) {
  const Hsv red = rgb_to_hsv(1, 0, 0);
  EXPECT_EQ(red.h, 0.0);
  EXPECT_EQ(red.s, 1.0);
  EXPECT_EQ(red.v, 1.0);
  EXPECT_DOUBLE_EQ(rgb_to_hsv(0, 1, 0).h, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(rgb_to_hsv(0, 0, 1).h, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(rgb_to_hsv(1, 0, 1).h, 5.0 / 6.0);
  const Hsv gray = rgb_to_hsv(0.5, 0.5, 0.5);
  EXPECT_EQ(gray.h, 0.0);
  EXPECT_EQ(gray.s, 0.0);
  EXPECT_EQ(gray.v, 0.5);
}

TEST(ImageIo, PnmAndPngAgree) {
  Raster8 rgb{4, 3, 3, {}};
  for (int i = 0; i < 36; ++i) rgb.data.push_back(static_cast<std::uint8_t>(i * 7));
  const auto pnm = decode_pnm(encode_pnm(rgb));
  const auto png = decode_png(encode_png(rgb));
  EXPECT_EQ(pnm.data, rgb.data);
  EXPECT_EQ(png.data, rgb.data);
  EXPECT_EQ(png.channels, 3);

  Raster8 gray{5, 2, 1, {0, 127, 128, 200, 255, 1, 2, 3, 4, 5}};
  const BinaryMask m = raster_to_mask(decode_raster(encode_png(gray)));
  EXPECT_FALSE(m.at(1, 0));
  EXPECT_TRUE(m.at(2, 0));
  EXPECT_EQ(m.count(), 3u);
}

TEST(ImageIo, PnmHeaderWithComments) {
  const std::string text = "P5\n# comment\n2 1\n255\n";
  std::vector<std::uint8_t> bytes(text.begin(), text.end());
  bytes.push_back(10);
  bytes.push_back(250);
  const Raster8 r = decode_pnm(bytes);
  EXPECT_EQ(r.width, 2);
  EXPECT_EQ(r.data, (std::vector<std::uint8_t>{10, 250}));
}

TEST(ImageIo, RejectsBadInput) {
  auto code_of = [](const std::vector<std::uint8_t>& bytes) {
    try {
      decode_raster(bytes);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::InvalidArgument;
  };
  const std::string ascii = "P2\n1 1\n255\n0\n";
  EXPECT_EQ(code_of({ascii.begin(), ascii.end()}), ErrorCode::ParseError);
  const std::string deep = "P5\n1 1\n65535\n";
  EXPECT_EQ(code_of({deep.begin(), deep.end()}), ErrorCode::ParseError);
  const std::string truncated = "P6\n2 2\n255\nabc";
  EXPECT_EQ(code_of({truncated.begin(), truncated.end()}), ErrorCode::ParseError);
  auto png = encode_png(Raster8{3, 3, 1, std::vector<std::uint8_t>(9, 7)});
  png.resize(png.size() / 2);
  EXPECT_EQ(code_of(png), ErrorCode::ParseError);
  EXPECT_THROW(read_image("/nonexistent/file.png"), Error);
}

TEST(ImageIo, ColourFilesLoadAsHsv) {
  const auto dir = std::filesystem::temp_directory_path() / "mmnn_test_image_io";
  std::filesystem::create_directories(dir);
  write_png(dir / "red.png", Raster8{1, 1, 3, {255, 0, 0}});
  const Image img = read_image(dir / "red.png");
  EXPECT_EQ(img.channels(), 3);
  EXPECT_EQ(img.at(0, 0, 0), 0.0);
  EXPECT_EQ(img.at(0, 0, 1), 1.0);
  EXPECT_EQ(img.at(0, 0, 2), 1.0);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace mmnn
