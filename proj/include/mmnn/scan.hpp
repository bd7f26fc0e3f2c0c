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

// Whole-image evaluation: per-pixel features and network outputs, computed
// in parallel over row stripes. Results are written to fixed per-pixel slots
// so they do not depend on the number of threads.

#include <algorithm>
#include <cstddef>
#include <exception>
#include <functional>
#include <span>
#include <thread>
#include <vector>

#include "mmnn/error.hpp"
#include "mmnn/image.hpp"
#include "mmnn/network.hpp"

namespace mmnn {

inline unsigned default_threads() {
  const unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : n;
}

/// Runs body(row_begin, row_end, stripe_index) over disjoint row ranges.
inline void for_each_row_stripe(int rows, unsigned threads,
                                const std::function<void(int, int, std::size_t)>& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max(rows, 1))));
  if (threads == 1) {
    body(0, rows, 0);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  pool.reserve(threads);
  const int per = (rows + static_cast<int>(threads) - 1) / static_cast<int>(threads);
  for (unsigned t = 0; t < threads; ++t) {
    const int begin = static_cast<int>(t) * per;
    const int end = std::min(rows, begin + per);
    pool.emplace_back([&, t, begin, end] {
      try {
        if (begin < end) body(begin, end, t);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

/// Row-major table of per-pixel feature vectors.
struct FeatureTable {
  int width = 0;
  int height = 0;
  std::size_t dim = 0;
  std::vector<double> data;

  std::size_t size() const noexcept { return static_cast<std::size_t>(width) * height; }
  std::span<const double> row(std::size_t pixel) const { return {data.data() + pixel * dim, dim}; }
};

inline FeatureTable compute_features(const Image& img, const FeatureConfig& cfg, unsigned threads = 1) {
  const FeatureExtractor extractor(cfg);
  FeatureTable table{img.width(), img.height(), extractor.length(img.channels()), {}};
  table.data.resize(table.size() * table.dim);
  for_each_row_stripe(img.height(), threads, [&](int y0, int y1, std::size_t) {
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < img.width(); ++x) {
        const auto f = extractor.extract_raw(img, x, y);
        std::copy(f.begin(), f.end(), table.data.begin() + (static_cast<std::ptrdiff_t>(y) * img.width() + x) * table.dim);
      }
    }
  });
  return table;
}

/// First network output at every pixel, row-major.
inline std::vector<double> scan_outputs(const FeatureTable& features, const NetworkSpec& net,
                                        ForwardDiagnostics* diag = nullptr, unsigned threads = 1) {
  if (features.dim != net.input_dim()) {
    throw Error(ErrorCode::LengthMismatch, "feature length " + std::to_string(features.dim) +
                                               " does not match network input " + std::to_string(net.input_dim()));
  }
  std::vector<double> out(features.size());
  std::vector<ForwardDiagnostics> local(std::max(1u, threads));
  for_each_row_stripe(features.height, threads, [&](int y0, int y1, std::size_t t) {
    for (int y = y0; y < y1; ++y) {
      for (int x = 0; x < features.width; ++x) {
        const std::size_t p = static_cast<std::size_t>(y) * features.width + x;
        out[p] = network_forward(features.row(p), net, &local[t]).front();
      }
    }
  });
  if (diag) {
    for (const auto& d : local) diag->zero_vector_events += d.zero_vector_events;
  }
  return out;
}

inline std::vector<double> scan_outputs(const Image& img, const NetworkSpec& net, const FeatureConfig& cfg,
                                        ForwardDiagnostics* diag = nullptr, unsigned threads = 1) {
  return scan_outputs(compute_features(img, cfg, threads), net, diag, threads);
}

}  // namespace mmnn
