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

// Real-multiplicity multisets and the Jaccard, interiority and coincidence
// similarity indices. A multiset over a fixed, ordered support is stored as
// the vector of its multiplicities (FeatureVector); IntegerMultiset keeps the
// labelled form used for the classical union/intersection/cardinality rules.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mmnn/error.hpp"

namespace mmnn {

// ---------------------------------------------------------------------------
// Exact summation
// ---------------------------------------------------------------------------

/// Correctly rounded floating point summation (Shewchuk's partials, the
/// algorithm behind Python's math.fsum). The result is the exact sum rounded
/// once to nearest, so it does not depend on the order of the terms.
class ExactSum {
 public:
  void add(double x) {
    std::size_t i = 0;
    for (std::size_t j = 0; j < count_; ++j) {
      double y = partials_[j];
      if (std::fabs(x) < std::fabs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[i++] = lo;
      x = hi;
    }
    // Finite doubles never need more than ~40 non-overlapping partials.
    partials_[i] = x;
    count_ = i + 1;
  }

  double value() const {
    if (count_ == 0) return 0.0;
    std::size_t n = count_;
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials_[--n];
      hi = x + y;
      const double yr = hi - x;
      lo = y - yr;
      if (lo != 0.0) break;
    }
    // Half-way case: the dropped tail pushes the rounding the other way.
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      const double yr = x - hi;
      if (y == yr) hi = x;
    }
    return hi;
  }

 private:
  std::array<double, 64> partials_{};
  std::size_t count_ = 0;
};

inline double exact_sum(std::span<const double> values) {
  ExactSum acc;
  for (double v : values) acc.add(v);
  return acc.value();
}

// ---------------------------------------------------------------------------
// FeatureVector
// ---------------------------------------------------------------------------

/// Ordered real multiplicities. Entries are always finite.
class FeatureVector {
 public:
  FeatureVector() = default;
  explicit FeatureVector(std::vector<double> values) : values_(std::move(values)) { validate(); }
  FeatureVector(std::initializer_list<double> values) : values_(values) { validate(); }

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }
  double operator[](std::size_t i) const { return values_[i]; }
  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& vector() const noexcept { return values_; }
  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }

  bool all_zero() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
  }
  bool has_negative() const noexcept {
    return std::any_of(values_.begin(), values_.end(), [](double v) { return v < 0.0; });
  }

  friend bool operator==(const FeatureVector&, const FeatureVector&) = default;

 private:
  void validate() const {
    for (double v : values_) {
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "feature vector entry is not finite");
    }
  }

  std::vector<double> values_;
};

// ---------------------------------------------------------------------------
// Similarity configuration
// ---------------------------------------------------------------------------

enum class SimilarityMode { NonNegative, Signed };

struct SimilarityConfig {
  double d_exponent = 1.0;
  SimilarityMode mode = SimilarityMode::NonNegative;

  void validate() const {
    if (!(d_exponent > 0.0) || !std::isfinite(d_exponent)) {
      throw Error(ErrorCode::InvalidArgument, "strictness exponent D must be a finite value > 0");
    }
  }

  friend bool operator==(const SimilarityConfig&, const SimilarityConfig&) = default;
};

inline const char* to_string(SimilarityMode mode) {
  return mode == SimilarityMode::Signed ? "signed" : "nonnegative";
}

inline SimilarityMode similarity_mode_from_string(const std::string& s) {
  if (s == "signed") return SimilarityMode::Signed;
  if (s == "nonnegative" || s == "non-negative" || s == "non_negative") return SimilarityMode::NonNegative;
  throw Error(ErrorCode::ParseError, "unknown similarity mode '" + s + "'");
}

// ---------------------------------------------------------------------------
// Similarity indices
// ---------------------------------------------------------------------------

/// Jaccard, interiority and coincidence of one pair, computed in one pass.
struct Similarity {
  double jaccard = 0.0;
  double interiority = 0.0;
  double coincidence = 0.0;
};

namespace detail {

inline double sign_of(double v) noexcept { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline void check_operands(std::span<const double> x, std::span<const double> y, const SimilarityConfig& cfg) {
  cfg.validate();
  if (x.size() != y.size()) {
    throw Error(ErrorCode::LengthMismatch,
                "operands have lengths " + std::to_string(x.size()) + " and " + std::to_string(y.size()));
  }
  if (cfg.mode == SimilarityMode::NonNegative) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] < 0.0 || y[i] < 0.0) {
        throw Error(ErrorCode::NegativeEntryInNonNegativeMode, "entry " + std::to_string(i) + " is negative");
      }
    }
  }
}

}  // namespace detail

/// sign(J) * |J|^D, so non-integer D never leaves the reals and odd integer D
/// matches the ordinary power.
inline double pow_signed(double value, double exponent) {
  if (value == 0.0) return 0.0;
  const double magnitude = exponent == 1.0 ? std::fabs(value) : std::pow(std::fabs(value), exponent);
  return value < 0.0 ? -magnitude : magnitude;
}

/// All three indices over raw spans. Both operands all-zero is an error; one
/// all-zero operand yields J = I = C = 0.
inline Similarity similarity(std::span<const double> x, std::span<const double> y, const SimilarityConfig& cfg) {
  detail::check_operands(x, y, cfg);

  ExactSum signed_min;  // sum s_i * min(|x_i|, |y_i|)
  ExactSum abs_min;     // sum min(|x_i|, |y_i|)
  ExactSum abs_max;     // sum max(|x_i|, |y_i|)
  ExactSum abs_x;
  ExactSum abs_y;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double ax = std::fabs(x[i]);
    const double ay = std::fabs(y[i]);
    const double lo = std::min(ax, ay);
    signed_min.add(detail::sign_of(x[i]) * detail::sign_of(y[i]) * lo);
    abs_min.add(lo);
    abs_max.add(std::max(ax, ay));
    abs_x.add(ax);
    abs_y.add(ay);
  }

  const double union_card = abs_max.value();
  if (union_card == 0.0) throw Error(ErrorCode::AllZeroOperands, "both operands are all-zero");

  Similarity s;
  s.jaccard = signed_min.value() / union_card;
  const double smaller = std::min(abs_x.value(), abs_y.value());
  s.interiority = smaller == 0.0 ? 0.0 : abs_min.value() / smaller;
  s.coincidence = pow_signed(s.jaccard, cfg.d_exponent) * s.interiority;
  return s;
}

inline Similarity similarity(const FeatureVector& x, const FeatureVector& y, const SimilarityConfig& cfg) {
  return similarity(x.values(), y.values(), cfg);
}

inline double jaccard(const FeatureVector& x, const FeatureVector& y, const SimilarityConfig& cfg) {
  return similarity(x, y, cfg).jaccard;
}

inline double interiority(const FeatureVector& x, const FeatureVector& y, const SimilarityConfig& cfg) {
  return similarity(x, y, cfg).interiority;
}

inline double coincidence(const FeatureVector& x, const FeatureVector& y, const SimilarityConfig& cfg) {
  return similarity(x, y, cfg).coincidence;
}

// ---------------------------------------------------------------------------
// Integer multisets
// ---------------------------------------------------------------------------

/// Labelled multiset with non-negative integer multiplicities. Labels with
/// multiplicity zero are never stored.
class IntegerMultiset {
 public:
  using Map = std::map<std::string, std::uint64_t>;

  IntegerMultiset() = default;
  IntegerMultiset(std::initializer_list<std::pair<const std::string, std::uint64_t>> tuples) {
    for (const auto& [label, m] : tuples) set(label, m);
  }

  void set(const std::string& label, std::uint64_t multiplicity) {
    if (multiplicity == 0) {
      tuples_.erase(label);
    } else {
      tuples_[label] = multiplicity;
    }
  }

  std::uint64_t multiplicity(const std::string& label) const {
    auto it = tuples_.find(label);
    return it == tuples_.end() ? 0 : it->second;
  }

  const Map& tuples() const noexcept { return tuples_; }
  std::vector<std::string> support() const {
    std::vector<std::string> labels;
    labels.reserve(tuples_.size());
    for (const auto& [label, m] : tuples_) labels.push_back(label);
    return labels;
  }
  bool empty() const noexcept { return tuples_.empty(); }

  /// Multiplicity vector over an ordered support (absent labels map to 0).
  FeatureVector embed(const std::vector<std::string>& support) const {
    std::vector<double> v;
    v.reserve(support.size());
    for (const auto& label : support) v.push_back(static_cast<double>(multiplicity(label)));
    return FeatureVector(std::move(v));
  }

  friend bool operator==(const IntegerMultiset&, const IntegerMultiset&) = default;

 private:
  Map tuples_;
};

inline IntegerMultiset ms_union(const IntegerMultiset& x, const IntegerMultiset& y) {
  IntegerMultiset z = x;
  for (const auto& [label, m] : y.tuples()) z.set(label, std::max(m, x.multiplicity(label)));
  return z;
}

inline IntegerMultiset ms_intersection(const IntegerMultiset& x, const IntegerMultiset& y) {
  IntegerMultiset z;
  for (const auto& [label, m] : x.tuples()) z.set(label, std::min(m, y.multiplicity(label)));
  return z;
}

inline std::uint64_t ms_cardinality(const IntegerMultiset& x) {
  std::uint64_t total = 0;
  for (const auto& [label, m] : x.tuples()) total += m;
  return total;
}

/// Sorted union of both supports; the joint coordinate system for embed().
inline std::vector<std::string> joint_support(const IntegerMultiset& x, const IntegerMultiset& y) {
  std::vector<std::string> labels = x.support();
  for (const auto& [label, m] : y.tuples()) {
    if (x.multiplicity(label) == 0) labels.push_back(label);
  }
  std::sort(labels.begin(), labels.end());
  return labels;
}

}  // namespace mmnn
