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

// JSON form of a network:
//   {"input_dim": N,
//    "layers": [[{"weights": [...], "d": D, "mode": "signed"|"nonnegative",
//                 "activation": {"kind": "linear"|"sigmoid"|"relu", "a": .., "b": ..}}, ...], ...]}
// Doubles are written with 17 significant digits, so save/load is lossless.

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "mmnn/error.hpp"
#include "mmnn/network.hpp"

namespace mmnn {

inline nlohmann::json activation_to_json(const Activation& act) {
  nlohmann::json j{{"kind", to_string(act.kind)}};
  if (act.kind == ActivationKind::Sigmoid) {
    j["a"] = act.a;
    j["b"] = act.b;
  }
  return j;
}

inline Activation activation_from_json(const nlohmann::json& j) {
  Activation act;
  act.kind = activation_kind_from_string(j.at("kind").get<std::string>());
  if (act.kind == ActivationKind::Sigmoid) {
    act.a = j.at("a").get<double>();
    act.b = j.value("b", 0.0);
  }
  act.validate();
  return act;
}

inline nlohmann::json network_to_json(const NetworkSpec& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.layers()) {
    nlohmann::json neurons = nlohmann::json::array();
    for (const auto& n : layer) {
      nlohmann::json jn{{"weights", n.weights.vector()},
                        {"d", n.similarity.d_exponent},
                        {"mode", to_string(n.similarity.mode)},
                        {"activation", activation_to_json(n.activation)}};
      if (!n.tag.empty()) jn["tag"] = n.tag;
      if (!n.inputs.empty()) jn["inputs"] = n.inputs;
      neurons.push_back(std::move(jn));
    }
    layers.push_back(std::move(neurons));
  }
  return {{"input_dim", net.input_dim()}, {"layers", std::move(layers)}};
}

inline NetworkSpec network_from_json(const nlohmann::json& j) {
  try {
    std::vector<Layer> layers;
    for (const auto& jl : j.at("layers")) {
      Layer layer;
      for (const auto& jn : jl) {
        Neuron n;
        n.weights = FeatureVector(jn.at("weights").get<std::vector<double>>());
        n.similarity.d_exponent = jn.value("d", 1.0);
        n.similarity.mode = similarity_mode_from_string(jn.value("mode", std::string("signed")));
        n.activation = jn.contains("activation") ? activation_from_json(jn.at("activation")) : Activation::linear();
        n.tag = jn.value("tag", std::string());
        if (jn.contains("inputs")) n.inputs = jn.at("inputs").get<std::vector<std::size_t>>();
        layer.push_back(std::move(n));
      }
      layers.push_back(std::move(layer));
    }
    return NetworkSpec(j.at("input_dim").get<std::size_t>(), std::move(layers));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("network JSON: ") + e.what());
  }
}

inline std::string serialize_network(const NetworkSpec& net) { return network_to_json(net).dump(2); }

inline NetworkSpec deserialize_network(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("network JSON: ") + e.what());
  }
  return network_from_json(j);
}

inline void save_network(const std::filesystem::path& path, const NetworkSpec& net) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  out << serialize_network(net) << '\n';
}

inline NetworkSpec load_network(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  return deserialize_network(std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()));
}

}  // namespace mmnn
