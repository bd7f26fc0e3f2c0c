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

// Multiset neurons and feed-forward multilayer networks built from them.
//
// A neuron compares its input with its weight vector through the coincidence
// index and passes the result through an activation. Layer 1 neurons read the
// pixel feature vector; every later neuron reads the whole output vector of
// the previous layer.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mmnn/error.hpp"
#include "mmnn/image.hpp"
#include "mmnn/multiset.hpp"

namespace mmnn {

enum class ActivationKind { Linear, Sigmoid, Relu };

struct Activation {
  ActivationKind kind = ActivationKind::Linear;
  double a = 1.0;  // sigmoid gain
  double b = 0.0;  // sigmoid offset

  static Activation linear() { return {ActivationKind::Linear, 1.0, 0.0}; }
  static Activation sigmoid(double gain, double offset) {
    Activation act{ActivationKind::Sigmoid, gain, offset};
    act.validate();
    return act;
  }
  static Activation relu() { return {ActivationKind::Relu, 1.0, 0.0}; }

  void validate() const {
    if (kind == ActivationKind::Sigmoid && !(a > 0.0 && std::isfinite(a) && std::isfinite(b))) {
      throw Error(ErrorCode::InvalidArgument, "sigmoid gain must be finite and > 0");
    }
  }

  friend bool operator==(const Activation&, const Activation&) = default;
};

inline const char* to_string(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::Linear: return "linear";
    case ActivationKind::Sigmoid: return "sigmoid";
    case ActivationKind::Relu: return "relu";
  }
  return "linear";
}

inline ActivationKind activation_kind_from_string(const std::string& s) {
  if (s == "linear") return ActivationKind::Linear;
  if (s == "sigmoid") return ActivationKind::Sigmoid;
  if (s == "relu") return ActivationKind::Relu;
  throw Error(ErrorCode::ParseError, "unknown activation '" + s + "'");
}

/// Standard logistic 1/(1+exp(-a(z+b))) for the sigmoid.
inline double activate(double z, const Activation& act) {
  switch (act.kind) {
    case ActivationKind::Linear: return z;
    case ActivationKind::Sigmoid: return 1.0 / (1.0 + std::exp(-act.a * (z + act.b)));
    case ActivationKind::Relu: return z > 0.0 ? z : 0.0;
  }
  return z;
}

struct Neuron {
  FeatureVector weights;
  SimilarityConfig similarity;
  Activation activation;
  /// Free-form provenance, e.g. "prototype:leaf". Not used by evaluation.
  std::string tag;
  /// Indices of the previous layer's outputs this neuron reads, in weight
  /// order. Empty means all of them.
  std::vector<std::size_t> inputs;

  void validate() const {
    similarity.validate();
    activation.validate();
    if (weights.empty()) throw Error(ErrorCode::InvalidArgument, "neuron has no weights");
    if (weights.all_zero()) throw Error(ErrorCode::AllZeroOperands, "neuron weights are all-zero");
    if (similarity.mode == SimilarityMode::NonNegative && weights.has_negative()) {
      throw Error(ErrorCode::NegativeEntryInNonNegativeMode, "negative weight in a non-negative neuron");
    }
  }

  friend bool operator==(const Neuron&, const Neuron&) = default;
};

inline double neuron_preactivation(std::span<const double> input, const Neuron& n) {
  return similarity(input, n.weights.values(), n.similarity).coincidence;
}

inline double neuron_forward(std::span<const double> input, const Neuron& n) {
  return activate(neuron_preactivation(input, n), n.activation);
}

inline double neuron_forward(const FeatureVector& input, const Neuron& n) { return neuron_forward(input.values(), n); }

using Layer = std::vector<Neuron>;

/// Address of one scalar weight: layer, neuron within the layer, entry.
struct WeightRef {
  std::size_t layer = 0;
  std::size_t neuron = 0;
  std::size_t index = 0;
  friend bool operator==(const WeightRef&, const WeightRef&) = default;
};

/// Counts of degenerate events seen during forward passes.
struct ForwardDiagnostics {
  std::uint64_t zero_vector_events = 0;
};

/// Immutable layered topology. Every shape rule is checked here so forward
/// passes never fail on topology.
class NetworkSpec {
 public:
  NetworkSpec() = default;
  NetworkSpec(std::size_t input_dim, std::vector<Layer> layers) : input_dim_(input_dim), layers_(std::move(layers)) {
    validate();
  }

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t output_dim() const noexcept { return layers_.empty() ? 0 : layers_.back().size(); }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  const Layer& layer(std::size_t l) const { return layers_.at(l); }

  double weight(const WeightRef& ref) const { return layers_.at(ref.layer).at(ref.neuron).weights.vector().at(ref.index); }

  /// Copy with the referenced weights replaced by values (validated).
  NetworkSpec with_weights(std::span<const WeightRef> refs, std::span<const double> values) const {
    if (refs.size() != values.size()) throw Error(ErrorCode::LengthMismatch, "weight refs and values differ in length");
    std::vector<Layer> layers = layers_;
    // Rebuild each touched neuron once.
    for (std::size_t k = 0; k < refs.size(); ++k) check_ref(refs[k]);
    for (std::size_t l = 0; l < layers.size(); ++l) {
      for (std::size_t n = 0; n < layers[l].size(); ++n) {
        bool touched = false;
        std::vector<double> w;
        for (std::size_t k = 0; k < refs.size(); ++k) {
          if (refs[k].layer == l && refs[k].neuron == n) {
            if (!touched) w = layers[l][n].weights.vector();
            touched = true;
            w[refs[k].index] = values[k];
          }
        }
        if (touched) layers[l][n].weights = FeatureVector(std::move(w));
      }
    }
    return NetworkSpec(input_dim_, std::move(layers));
  }

  std::vector<double> weights_at(std::span<const WeightRef> refs) const {
    std::vector<double> out;
    out.reserve(refs.size());
    for (const auto& r : refs) {
      check_ref(r);
      out.push_back(weight(r));
    }
    return out;
  }

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;

 private:
  void check_ref(const WeightRef& r) const {
    if (r.layer >= layers_.size() || r.neuron >= layers_[r.layer].size() ||
        r.index >= layers_[r.layer][r.neuron].weights.size()) {
      throw Error(ErrorCode::OutOfBounds, "weight reference outside the network");
    }
  }

  void validate() const {
    if (input_dim_ == 0) throw Error(ErrorCode::TopologyMismatch, "input dimension must be >= 1");
    if (layers_.empty()) throw Error(ErrorCode::TopologyMismatch, "network has no layers");
    std::size_t expected = input_dim_;
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      if (layers_[l].empty()) throw Error(ErrorCode::TopologyMismatch, "layer " + std::to_string(l) + " is empty");
      for (std::size_t n = 0; n < layers_[l].size(); ++n) {
        const Neuron& neuron = layers_[l][n];
        const std::string where = "layer " + std::to_string(l) + " neuron " + std::to_string(n);
        const std::size_t fan_in = neuron.inputs.empty() ? expected : neuron.inputs.size();
        if (neuron.weights.size() != fan_in) {
          throw Error(ErrorCode::TopologyMismatch, where + " has " + std::to_string(neuron.weights.size()) +
                                                       " weights, expected " + std::to_string(fan_in));
        }
        std::vector<bool> seen(expected, false);
        for (std::size_t i : neuron.inputs) {
          if (i >= expected || seen[i]) {
            throw Error(ErrorCode::TopologyMismatch, where + " has an invalid or repeated input " + std::to_string(i));
          }
          seen[i] = true;
        }
        neuron.validate();
      }
      expected = layers_[l].size();
    }
  }

  std::size_t input_dim_ = 0;
  std::vector<Layer> layers_;
};

/// Evaluates layers [first_layer, S) given the output vector of layer
/// first_layer-1 (or the network input when first_layer is 0).
///
/// A neuron whose hidden input is exactly the zero vector outputs 0 and the
/// event is counted.
inline std::vector<double> forward_from(std::vector<double> values, const NetworkSpec& net, std::size_t first_layer,
                                        ForwardDiagnostics* diag = nullptr) {
  for (std::size_t l = first_layer; l < net.num_layers(); ++l) {
    const Layer& layer = net.layer(l);
    std::vector<double> next(layer.size(), 0.0);
    std::vector<double> gathered;
    for (std::size_t n = 0; n < layer.size(); ++n) {
      std::span<const double> in = values;
      if (!layer[n].inputs.empty()) {
        gathered.resize(layer[n].inputs.size());
        for (std::size_t k = 0; k < gathered.size(); ++k) gathered[k] = values[layer[n].inputs[k]];
        in = gathered;
      }
      if (l > 0 && std::all_of(in.begin(), in.end(), [](double v) { return v == 0.0; })) {
        if (diag) ++diag->zero_vector_events;
        continue;
      }
      next[n] = neuron_forward(in, layer[n]);
    }
    values = std::move(next);
  }
  return values;
}

inline std::vector<double> network_forward(std::span<const double> input, const NetworkSpec& net,
                                           ForwardDiagnostics* diag = nullptr) {
  if (input.size() != net.input_dim()) {
    throw Error(ErrorCode::LengthMismatch, "input has " + std::to_string(input.size()) + " entries, network expects " +
                                               std::to_string(net.input_dim()));
  }
  return forward_from(std::vector<double>(input.begin(), input.end()), net, 0, diag);
}

inline std::vector<double> network_forward(const FeatureVector& input, const NetworkSpec& net,
                                           ForwardDiagnostics* diag = nullptr) {
  return network_forward(input.values(), net, diag);
}

/// Flattened addresses of every weight in layers [first, last).
inline std::vector<WeightRef> weights_of_layers(const NetworkSpec& net, std::size_t first, std::size_t last) {
  std::vector<WeightRef> refs;
  for (std::size_t l = first; l < std::min(last, net.num_layers()); ++l) {
    for (std::size_t n = 0; n < net.layer(l).size(); ++n) {
      for (std::size_t i = 0; i < net.layer(l)[n].weights.size(); ++i) refs.push_back({l, n, i});
    }
  }
  return refs;
}

inline BinaryMask or_combine(std::span<const BinaryMask> masks) {
  if (masks.empty()) throw Error(ErrorCode::InvalidArgument, "or_combine needs at least one mask");
  BinaryMask out = masks.front();
  for (const auto& m : masks.subspan(1)) {
    if (!m.same_shape(out)) throw Error(ErrorCode::DimensionMismatch, "masks differ in size");
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
      if (m[i]) out.set(i, true);
    }
  }
  return out;
}

}  // namespace mmnn
