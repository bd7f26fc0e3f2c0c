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

// Segmentation objectives and multi-start gradient ascent.
//
// Weights are optimised as a flat vector addressed by WeightRef. The gradient
// is estimated by central differences; each ascent step moves a fixed length
// along the normalised gradient, a step that lowers the objective ends the
// trajectory, and the best final point over all starts is installed.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mmnn/error.hpp"
#include "mmnn/image.hpp"
#include "mmnn/multiset.hpp"
#include "mmnn/network.hpp"
#include "mmnn/scan.hpp"

namespace mmnn {

// ---------------------------------------------------------------------------
// Confusion counts and balanced accuracy
// ---------------------------------------------------------------------------

struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const noexcept { return tp + fp + tn + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Gold true is the positive class.
inline ConfusionCounts confusion(const BinaryMask& pred, const BinaryMask& gold) {
  if (!pred.same_shape(gold)) throw Error(ErrorCode::DimensionMismatch, "prediction and gold differ in size");
  ConfusionCounts c;
  for (std::size_t i = 0; i < gold.pixel_count(); ++i) {
    if (gold[i]) {
      pred[i] ? ++c.tp : ++c.fn;
    } else {
      pred[i] ? ++c.fp : ++c.tn;
    }
  }
  return c;
}

inline double balanced_accuracy(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) {
    throw Error(ErrorCode::DegenerateGold, "gold mask must contain both object and background pixels");
  }
  const double sensitivity = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  const double specificity = static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
  return 0.5 * sensitivity + 0.5 * specificity;
}

/// Inclusive threshold: raw >= T is object.
inline BinaryMask threshold_mask(int width, int height, std::span<const double> raw, double threshold) {
  if (raw.size() != static_cast<std::size_t>(width) * height) {
    throw Error(ErrorCode::DimensionMismatch, "raw output size does not match mask size");
  }
  BinaryMask m(width, height);
  for (std::size_t i = 0; i < raw.size(); ++i) m.set(i, raw[i] >= threshold);
  return m;
}

// ---------------------------------------------------------------------------
// Objectives
// ---------------------------------------------------------------------------

enum class ObjectiveKind { ObjectiveA, BalancedAccuracy };

struct Objective {
  ObjectiveKind kind = ObjectiveKind::ObjectiveA;
  double threshold = 0.5;  // only used by BalancedAccuracy

  static Objective a() { return {ObjectiveKind::ObjectiveA, 0.5}; }
  static Objective ba(double threshold) { return {ObjectiveKind::BalancedAccuracy, threshold}; }
};

/// Sum of outputs over gold object pixels minus the sum over background.
inline double objective_a_from_outputs(std::span<const double> outputs, const BinaryMask& gold) {
  if (outputs.size() != gold.pixel_count()) throw Error(ErrorCode::DimensionMismatch, "outputs do not match gold");
  ExactSum acc;
  for (std::size_t i = 0; i < outputs.size(); ++i) acc.add(gold[i] ? outputs[i] : -outputs[i]);
  return acc.value();
}

inline double objective_ba_from_outputs(std::span<const double> outputs, const BinaryMask& gold, double threshold) {
  return balanced_accuracy(confusion(threshold_mask(gold.width(), gold.height(), outputs, threshold), gold));
}

inline double objective_from_outputs(std::span<const double> outputs, const BinaryMask& gold, const Objective& obj) {
  return obj.kind == ObjectiveKind::ObjectiveA ? objective_a_from_outputs(outputs, gold)
                                               : objective_ba_from_outputs(outputs, gold, obj.threshold);
}

namespace detail {
inline void require_single_output(const NetworkSpec& net, const Image& img, const BinaryMask& gold) {
  if (net.output_dim() != 1) throw Error(ErrorCode::TopologyMismatch, "objective needs a single-output network");
  if (img.width() != gold.width() || img.height() != gold.height()) {
    throw Error(ErrorCode::DimensionMismatch, "gold mask does not match image");
  }
}
}  // namespace detail

inline double objective_a(const NetworkSpec& net, const Image& img, const BinaryMask& gold, const FeatureConfig& fcfg) {
  detail::require_single_output(net, img, gold);
  return objective_a_from_outputs(scan_outputs(img, net, fcfg), gold);
}

inline double objective_ba(const NetworkSpec& net, const Image& img, const BinaryMask& gold, const FeatureConfig& fcfg,
                           double threshold) {
  detail::require_single_output(net, img, gold);
  return objective_ba_from_outputs(scan_outputs(img, net, fcfg), gold, threshold);
}

// ---------------------------------------------------------------------------
// Weight installation
// ---------------------------------------------------------------------------

/// Replaces the referenced weights. A neuron whose weights would become
/// exactly zero gets +guard on its first entry when guard > 0; with guard 0
/// the AllZeroOperands error propagates.
inline NetworkSpec install_weights(const NetworkSpec& net, std::span<const WeightRef> refs,
                                   std::span<const double> values, double guard) {
  if (refs.size() != values.size()) throw Error(ErrorCode::LengthMismatch, "weight refs and values differ in length");
  if (guard <= 0.0) return net.with_weights(refs, values);
  std::vector<Layer> layers = net.layers();
  std::vector<std::vector<double>> touched_values;
  std::vector<std::pair<std::size_t, std::size_t>> touched;
  for (std::size_t k = 0; k < refs.size(); ++k) {
    const auto key = std::make_pair(refs[k].layer, refs[k].neuron);
    auto it = std::find(touched.begin(), touched.end(), key);
    if (it == touched.end()) {
      touched.push_back(key);
      touched_values.push_back(net.layers().at(key.first).at(key.second).weights.vector());
      it = touched.end() - 1;
    }
    auto& w = touched_values[static_cast<std::size_t>(it - touched.begin())];
    if (refs[k].index >= w.size()) throw Error(ErrorCode::OutOfBounds, "weight reference outside the network");
    w[refs[k].index] = values[k];
  }
  for (std::size_t t = 0; t < touched.size(); ++t) {
    auto& w = touched_values[t];
    if (std::all_of(w.begin(), w.end(), [](double v) { return v == 0.0; })) w[0] += guard;
    layers[touched[t].first][touched[t].second].weights = FeatureVector(std::move(w));
  }
  return NetworkSpec(net.input_dim(), std::move(layers));
}

// ---------------------------------------------------------------------------
// Scene evaluator
// ---------------------------------------------------------------------------

/// Objective as a function of a flat set of free weights over one labelled
/// image. Outputs of the layers below the lowest free layer do not depend on
/// the free weights and are computed once.
class SceneEvaluator {
 public:
  SceneEvaluator(NetworkSpec net, const Image& img, const BinaryMask& gold, const FeatureConfig& fcfg,
                 std::vector<WeightRef> free, Objective objective, double zero_guard = 0.0, unsigned threads = 1)
      : net_(std::move(net)), gold_(gold), free_(std::move(free)), objective_(objective), guard_(zero_guard),
        threads_(threads) {
    detail::require_single_output(net_, img, gold);
    if (free_.empty()) throw Error(ErrorCode::InvalidArgument, "no free weights selected");
    net_.weights_at(free_);  // bounds check
    first_free_layer_ = free_.front().layer;
    for (const auto& r : free_) first_free_layer_ = std::min(first_free_layer_, r.layer);

    const FeatureTable features = compute_features(img, fcfg, threads_);
    if (features.dim != net_.input_dim()) {
      throw Error(ErrorCode::LengthMismatch, "feature length does not match network input");
    }
    pixels_ = features.size();
    width_ = features.width;
    height_ = features.height;
    if (first_free_layer_ == 0) {
      prefix_dim_ = features.dim;
      prefix_ = features.data;
    } else {
      prefix_dim_ = net_.layer(first_free_layer_ - 1).size();
      prefix_.resize(pixels_ * prefix_dim_);
      NetworkSpec head(net_.input_dim(), std::vector<Layer>(net_.layers().begin(),
                                                            net_.layers().begin() + static_cast<std::ptrdiff_t>(first_free_layer_)));
      for (std::size_t p = 0; p < pixels_; ++p) {
        const auto out = network_forward(features.row(p), head, &prefix_diag_);
        std::copy(out.begin(), out.end(), prefix_.begin() + static_cast<std::ptrdiff_t>(p * prefix_dim_));
      }
    }
  }

  std::size_t dimension() const noexcept { return free_.size(); }
  const std::vector<WeightRef>& free_weights() const noexcept { return free_; }
  const NetworkSpec& base_network() const noexcept { return net_; }
  const Objective& objective() const noexcept { return objective_; }
  double zero_guard() const noexcept { return guard_; }

  NetworkSpec network_with(std::span<const double> w) const { return install_weights(net_, free_, w, guard_); }

  /// Per-pixel first output of the network with the given free weights.
  std::vector<double> outputs(std::span<const double> w, ForwardDiagnostics* diag = nullptr) const {
    const NetworkSpec net = network_with(w);
    std::vector<double> out(pixels_);
    std::vector<ForwardDiagnostics> local(std::max(1u, threads_));
    for_each_row_stripe(height_, threads_, [&](int y0, int y1, std::size_t t) {
      for (std::size_t p = static_cast<std::size_t>(y0) * width_; p < static_cast<std::size_t>(y1) * width_; ++p) {
        std::vector<double> v(prefix_.begin() + static_cast<std::ptrdiff_t>(p * prefix_dim_),
                              prefix_.begin() + static_cast<std::ptrdiff_t>((p + 1) * prefix_dim_));
        out[p] = forward_from(std::move(v), net, first_free_layer_, &local[t]).front();
      }
    });
    if (diag) {
      for (const auto& d : local) diag->zero_vector_events += d.zero_vector_events;
    }
    return out;
  }

  double operator()(std::span<const double> w) const { return evaluate(w, objective_); }

  double evaluate(std::span<const double> w, const Objective& obj) const {
    return objective_from_outputs(outputs(w), gold_, obj);
  }

 private:
  NetworkSpec net_;
  BinaryMask gold_;
  std::vector<WeightRef> free_;
  Objective objective_;
  double guard_;
  unsigned threads_;
  std::size_t first_free_layer_ = 0;
  std::size_t pixels_ = 0;
  int width_ = 0;
  int height_ = 0;
  std::size_t prefix_dim_ = 0;
  std::vector<double> prefix_;
  ForwardDiagnostics prefix_diag_;
};

// ---------------------------------------------------------------------------
// Gradient ascent
// ---------------------------------------------------------------------------

using ScalarField = std::function<double(std::span<const double>)>;

/// Central differences: g_i = (f(w + h e_i) - f(w - h e_i)) / 2h.
inline std::vector<double> fd_gradient(const ScalarField& f, std::span<const double> w, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "finite-difference resolution must be > 0");
  std::vector<double> probe(w.begin(), w.end());
  std::vector<double> g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    probe[i] = w[i] + h;
    const double up = f(probe);
    probe[i] = w[i] - h;
    const double down = f(probe);
    probe[i] = w[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

enum class StepRule {
  FixedLength,  // w += eta * g / |g|
  RawGradient,  // w += eta * g
};

struct TrainConfig {
  std::size_t num_starts = 10;
  std::size_t max_steps = 30;
  double fd_resolution = 0.01;
  double step_size = 0.05;
  double stop_threshold = 1e-6;
  Objective objective = Objective::a();
  std::uint64_t seed = 0;
  std::vector<WeightRef> trainable;
  StepRule step_rule = StepRule::FixedLength;
  /// Starts tried before the random ones (e.g. a hand-designed initial
  /// configuration). Each must match the free-weight dimension.
  std::vector<std::vector<double>> explicit_starts;
  unsigned threads = 1;

  void validate() const {
    if (num_starts + explicit_starts.size() < 1) throw Error(ErrorCode::InvalidArgument, "need at least one start");
    if (!(fd_resolution > 0.0)) throw Error(ErrorCode::InvalidArgument, "fd_resolution must be > 0");
    if (!(step_size > 0.0)) throw Error(ErrorCode::InvalidArgument, "step_size must be > 0");
    if (!(stop_threshold >= 0.0)) throw Error(ErrorCode::InvalidArgument, "stop_threshold must be >= 0");
  }
};

struct TrajectoryStep {
  std::vector<double> weights;
  double objective = 0.0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;

  const TrajectoryStep& final() const { return steps.back(); }
  std::size_t size() const noexcept { return steps.size(); }
};

inline Trajectory gradient_ascent(const ScalarField& f, std::span<const double> w0, const TrainConfig& cfg) {
  cfg.validate();
  Trajectory t;
  std::vector<double> w(w0.begin(), w0.end());
  double current = f(w);
  if (!std::isfinite(current)) throw Error(ErrorCode::NonFiniteValue, "objective is not finite at the start point");
  t.steps.push_back({w, current});
  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    const std::vector<double> g = fd_gradient(f, w, cfg.fd_resolution);
    ExactSum sq;
    for (double gi : g) sq.add(gi * gi);
    const double norm = std::sqrt(sq.value());
    if (norm == 0.0 || !std::isfinite(norm)) break;  // plateau: converged
    const double scale = cfg.step_rule == StepRule::FixedLength ? cfg.step_size / norm : cfg.step_size;
    std::vector<double> next(w.size());
    for (std::size_t i = 0; i < w.size(); ++i) next[i] = w[i] + scale * g[i];
    const double value = f(next);
    if (!std::isfinite(value) || value < current) break;  // rejected step
    t.steps.push_back({next, value});
    const double change = value - current;
    w = std::move(next);
    current = value;
    if (std::fabs(change) < cfg.stop_threshold) break;
  }
  return t;
}

using ProgressFn = std::function<void(std::size_t done, std::size_t total)>;

/// Uniform starts in [-1,1]^d from a 64-bit Mersenne twister. The mapping
/// from raw draws is spelled out so sequences match across standard
/// libraries.
inline std::vector<std::vector<double>> random_starts(std::uint64_t seed, std::size_t count, std::size_t dim) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<double>> starts(count, std::vector<double>(dim));
  for (auto& s : starts) {
    for (auto& v : s) {
      const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
      v = -1.0 + 2.0 * u;
    }
  }
  return starts;
}

struct AscentResult {
  std::vector<Trajectory> trajectories;
  std::size_t winner = 0;
};

/// Explicit starts first, then cfg.num_starts uniform draws from [-1,1]^dim.
/// The winner is the highest final objective, ties to the lowest index.
inline AscentResult multi_start_ascent(const ScalarField& f, std::size_t dim, const TrainConfig& cfg,
                                       const ProgressFn& progress = {}) {
  cfg.validate();
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "no free weights selected");
  std::vector<std::vector<double>> starts = cfg.explicit_starts;
  for (const auto& s : starts) {
    if (s.size() != dim) throw Error(ErrorCode::LengthMismatch, "explicit start has wrong length");
  }
  for (auto& s : random_starts(cfg.seed, cfg.num_starts, dim)) starts.push_back(std::move(s));

  AscentResult result;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    result.trajectories.push_back(gradient_ascent(f, starts[k], cfg));
    if (progress) progress(k + 1, starts.size());
  }
  for (std::size_t k = 1; k < result.trajectories.size(); ++k) {
    if (result.trajectories[k].final().objective > result.trajectories[result.winner].final().objective) {
      result.winner = k;
    }
  }
  return result;
}

struct TrainResult {
  NetworkSpec network;
  std::vector<Trajectory> trajectories;
  std::size_t winner = 0;

  double best_objective() const { return trajectories.at(winner).final().objective; }
};

inline TrainResult multi_start_train(const SceneEvaluator& eval, const TrainConfig& cfg,
                                     const ProgressFn& progress = {}) {
  const ScalarField f = [&eval](std::span<const double> w) { return eval(w); };
  AscentResult ascent = multi_start_ascent(f, eval.dimension(), cfg, progress);
  TrainResult result;
  result.network = eval.network_with(ascent.trajectories[ascent.winner].final().weights);
  result.trajectories = std::move(ascent.trajectories);
  result.winner = ascent.winner;
  return result;
}

/// Trains the cfg.trainable weights of net on one labelled image.
inline TrainResult multi_start_train(const NetworkSpec& net, const Image& img, const BinaryMask& gold,
                                     const FeatureConfig& fcfg, const TrainConfig& cfg,
                                     const ProgressFn& progress = {}) {
  cfg.validate();
  if (cfg.trainable.empty()) throw Error(ErrorCode::InvalidArgument, "no trainable weights selected");
  const SceneEvaluator eval(net, img, gold, fcfg, cfg.trainable, cfg.objective, cfg.fd_resolution, cfg.threads);
  return multi_start_train(eval, cfg, progress);
}

// ---------------------------------------------------------------------------
// Prototype layer
// ---------------------------------------------------------------------------

/// One neuron per annotated point, weights = features at that point.
inline Layer prototype_init(const Image& img, std::span<const AnnotatedPoint> points, const FeatureConfig& fcfg,
                            const SimilarityConfig& sim, const Activation& act) {
  if (points.empty()) throw Error(ErrorCode::InvalidArgument, "no annotated points");
  const FeatureExtractor extractor(fcfg);
  Layer layer;
  layer.reserve(points.size());
  for (const auto& p : points) {
    Neuron n{extractor.extract(img, p.x, p.y), sim, act, std::string(to_string(p.role)) + ":" + p.class_label, {}};
    n.validate();
    layer.push_back(std::move(n));
  }
  return layer;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

/// Columns: step, w_0 .. w_{d-1}, objective.
inline void write_trajectory_csv(std::ostream& out, const Trajectory& t) {
  const std::size_t dim = t.steps.empty() ? 0 : t.steps.front().weights.size();
  out << "step";
  for (std::size_t i = 0; i < dim; ++i) out << ",w_" << i;
  out << ",objective\n";
  const auto old = out.precision(17);
  for (std::size_t s = 0; s < t.steps.size(); ++s) {
    out << s;
    for (double w : t.steps[s].weights) out << ',' << w;
    out << ',' << t.steps[s].objective << '\n';
  }
  out.precision(old);
}

}  // namespace mmnn
