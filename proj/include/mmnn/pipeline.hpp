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

// End-to-end segmentation: architecture files, network construction from
// annotated points, training on a decimated copy of the scene, full
// resolution segmentation and the artifacts written for each run.

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mmnn/error.hpp"
#include "mmnn/image.hpp"
#include "mmnn/image_io.hpp"
#include "mmnn/network.hpp"
#include "mmnn/network_io.hpp"
#include "mmnn/scan.hpp"
#include "mmnn/training.hpp"

namespace mmnn {

// ---------------------------------------------------------------------------
// Segmentation
// ---------------------------------------------------------------------------

struct RunDiagnostics {
  std::uint64_t zero_vector_events = 0;
  double elapsed_ms = 0.0;
};

struct SegmentationResult {
  int width = 0;
  int height = 0;
  std::vector<double> raw;  // first network output per pixel, row-major
  BinaryMask mask;          // raw >= threshold
  double threshold = 0.5;
  std::optional<ConfusionCounts> counts;
  std::optional<double> balanced_accuracy;
  RunDiagnostics diagnostics;
};

inline SegmentationResult segment_image(const Image& img, const NetworkSpec& net, const FeatureConfig& fcfg,
                                        double threshold, unsigned threads = default_threads()) {
  if (net.output_dim() != 1) throw Error(ErrorCode::TopologyMismatch, "segmentation needs a single-output network");
  if (!(threshold >= 0.0 && threshold <= 1.0)) throw Error(ErrorCode::InvalidArgument, "threshold must be in [0,1]");
  const auto t0 = std::chrono::steady_clock::now();
  SegmentationResult r;
  r.width = img.width();
  r.height = img.height();
  r.threshold = threshold;
  ForwardDiagnostics diag;
  r.raw = scan_outputs(img, net, fcfg, &diag, threads);
  r.mask = threshold_mask(r.width, r.height, r.raw, threshold);
  r.diagnostics.zero_vector_events = diag.zero_vector_events;
  r.diagnostics.elapsed_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

inline void score(SegmentationResult& r, const BinaryMask& gold) {
  r.counts = confusion(r.mask, gold);
  r.balanced_accuracy = balanced_accuracy(*r.counts);
}

// ---------------------------------------------------------------------------
// Annotated points
// ---------------------------------------------------------------------------

/// CSV rows "x,y,role,class"; a header row and blank lines are skipped.
inline std::vector<AnnotatedPoint> parse_points_csv(const std::string& text) {
  std::vector<AnnotatedPoint> points;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
    }
    if (lineno == 1 && !cells.empty() && cells[0] == "x") continue;
    if (cells.size() < 3) throw Error(ErrorCode::ParseError, "points line " + std::to_string(lineno) + ": expected x,y,role[,class]");
    AnnotatedPoint p;
    try {
      std::size_t used = 0;
      p.x = std::stoi(cells[0], &used);
      if (used != cells[0].size()) throw std::invalid_argument("x");
      p.y = std::stoi(cells[1], &used);
      if (used != cells[1].size()) throw std::invalid_argument("y");
    } catch (const std::exception&) {
      throw Error(ErrorCode::ParseError, "points line " + std::to_string(lineno) + ": bad coordinate");
    }
    p.role = point_role_from_string(cells[2]);
    p.class_label = cells.size() > 3 ? cells[3] : std::string("object");
    points.push_back(std::move(p));
  }
  return points;
}

inline std::string points_to_csv(const std::vector<AnnotatedPoint>& points) {
  std::string out = "x,y,role,class\n";
  for (const auto& p : points) {
    out += std::to_string(p.x) + "," + std::to_string(p.y) + "," + to_string(p.role) + "," + p.class_label + "\n";
  }
  return out;
}

inline std::vector<AnnotatedPoint> load_points(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  return parse_points_csv(std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()));
}

// ---------------------------------------------------------------------------
// Architecture files
// ---------------------------------------------------------------------------

/// One layer of an architecture file. "prototypes" layers get one neuron per
/// annotated point (optionally filtered by class); "dense" layers get
/// `neurons` neurons fully connected to the previous layer.
struct LayerSpec {
  enum class Kind { Prototypes, Dense } kind = Kind::Dense;
  std::size_t neurons = 1;
  SimilarityConfig similarity{1.0, SimilarityMode::Signed};
  Activation activation = Activation::linear();
  bool trainable = false;
  std::vector<std::string> classes;           // prototypes: empty = all points
  std::vector<std::vector<double>> init;      // dense: per-neuron initial weights
  std::vector<std::vector<std::size_t>> inputs;  // dense: per-neuron input indices, empty = all
};

struct ArchSpec {
  FeatureConfig features;
  double threshold = 0.5;
  int subsample = 10;
  /// Add the dense layers' init weights as an extra start before the random ones.
  bool init_as_start = false;
  std::vector<LayerSpec> layers;

  bool has_trainable() const {
    return std::any_of(layers.begin(), layers.end(), [](const LayerSpec& l) { return l.trainable; });
  }
};

inline ArchSpec arch_from_json(const nlohmann::json& j) {
  try {
    ArchSpec a;
    a.features.radius = j.value("radius", 3);
    a.features.sort_within_channel = j.value("sort", true);
    a.threshold = j.value("threshold", 0.5);
    a.subsample = j.value("subsample", 10);
    a.init_as_start = j.value("init_as_start", false);
    for (const auto& jl : j.at("layers")) {
      LayerSpec l;
      const std::string kind = jl.value("kind", std::string("dense"));
      if (kind == "prototypes") {
        l.kind = LayerSpec::Kind::Prototypes;
      } else if (kind != "dense") {
        throw Error(ErrorCode::ParseError, "unknown layer kind '" + kind + "'");
      }
      l.neurons = jl.value("neurons", std::size_t{1});
      l.similarity.d_exponent = jl.value("d", 1.0);
      l.similarity.mode = similarity_mode_from_string(jl.value("mode", std::string("signed")));
      l.activation = jl.contains("activation") ? activation_from_json(jl.at("activation")) : Activation::linear();
      l.trainable = jl.value("trainable", false);
      if (jl.contains("classes")) l.classes = jl.at("classes").get<std::vector<std::string>>();
      if (jl.contains("init")) l.init = jl.at("init").get<std::vector<std::vector<double>>>();
      if (jl.contains("inputs")) l.inputs = jl.at("inputs").get<std::vector<std::vector<std::size_t>>>();
      a.layers.push_back(std::move(l));
    }
    if (a.layers.empty()) throw Error(ErrorCode::ParseError, "architecture has no layers");
    if (!(a.threshold >= 0.0 && a.threshold <= 1.0)) throw Error(ErrorCode::ParseError, "threshold must be in [0,1]");
    if (a.subsample < 1) throw Error(ErrorCode::ParseError, "subsample must be >= 1");
    if (a.features.radius < 0) throw Error(ErrorCode::ParseError, "radius must be >= 0");
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("architecture JSON: ") + e.what());
  }
}

inline nlohmann::json arch_to_json(const ArchSpec& a) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : a.layers) {
    nlohmann::json jl{{"kind", l.kind == LayerSpec::Kind::Prototypes ? "prototypes" : "dense"},
                      {"d", l.similarity.d_exponent},
                      {"mode", to_string(l.similarity.mode)},
                      {"activation", activation_to_json(l.activation)},
                      {"trainable", l.trainable}};
    if (l.kind == LayerSpec::Kind::Dense) jl["neurons"] = l.neurons;
    if (!l.classes.empty()) jl["classes"] = l.classes;
    if (!l.init.empty()) jl["init"] = l.init;
    if (!l.inputs.empty()) jl["inputs"] = l.inputs;
    layers.push_back(std::move(jl));
  }
  return {{"radius", a.features.radius}, {"sort", a.features.sort_within_channel}, {"threshold", a.threshold},
          {"subsample", a.subsample},    {"init_as_start", a.init_as_start},       {"layers", layers}};
}

inline ArchSpec load_arch(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  try {
    return arch_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, std::string("architecture JSON: ") + e.what());
  }
}

/// Prototype/counter-prototype layer with linear outputs feeding one signed
/// sigmoid neuron with two trainable weights.
inline ArchSpec two_layer_arch(int radius, double d_first, double gain, double offset, double threshold) {
  ArchSpec a;
  a.features.radius = radius;
  a.threshold = threshold;
  LayerSpec first;
  first.kind = LayerSpec::Kind::Prototypes;
  first.similarity = {d_first, SimilarityMode::Signed};
  LayerSpec second;
  second.neurons = 1;
  second.similarity = {1.0, SimilarityMode::Signed};
  second.activation = Activation::sigmoid(gain, offset);
  second.trainable = true;
  a.layers = {first, second};
  return a;
}

/// Builds the network; prototype weights come from `img` at the given points.
/// Untrained dense neurons start at their init weights, or all ones.
inline NetworkSpec build_network(const ArchSpec& arch, const Image& img, const std::vector<AnnotatedPoint>& points) {
  std::vector<Layer> layers;
  const std::size_t input_dim = feature_length(arch.features, img.channels());
  std::size_t prev = input_dim;
  for (std::size_t li = 0; li < arch.layers.size(); ++li) {
    const LayerSpec& spec = arch.layers[li];
    Layer layer;
    if (spec.kind == LayerSpec::Kind::Prototypes) {
      if (li != 0) throw Error(ErrorCode::TopologyMismatch, "prototype layers must come first");
      std::vector<AnnotatedPoint> chosen;
      for (const auto& p : points) {
        if (spec.classes.empty() || std::find(spec.classes.begin(), spec.classes.end(), p.class_label) != spec.classes.end()) {
          chosen.push_back(p);
        }
      }
      layer = prototype_init(img, chosen, arch.features, spec.similarity, spec.activation);
    } else {
      if (!spec.init.empty() && spec.init.size() != spec.neurons) {
        throw Error(ErrorCode::TopologyMismatch, "layer " + std::to_string(li) + ": init has wrong neuron count");
      }
      if (!spec.inputs.empty() && spec.inputs.size() != spec.neurons) {
        throw Error(ErrorCode::TopologyMismatch, "layer " + std::to_string(li) + ": inputs has wrong neuron count");
      }
      for (std::size_t n = 0; n < spec.neurons; ++n) {
        std::vector<std::size_t> inputs = spec.inputs.empty() ? std::vector<std::size_t>{} : spec.inputs[n];
        const std::size_t fan_in = inputs.empty() ? prev : inputs.size();
        std::vector<double> w = spec.init.empty() ? std::vector<double>(fan_in, 1.0) : spec.init[n];
        if (w.size() != fan_in) {
          throw Error(ErrorCode::TopologyMismatch, "layer " + std::to_string(li) + ": init weights need " +
                                                       std::to_string(fan_in) + " entries");
        }
        layer.push_back(Neuron{FeatureVector(std::move(w)), spec.similarity, spec.activation, {}, std::move(inputs)});
      }
    }
    prev = layer.size();
    layers.push_back(std::move(layer));
  }
  return NetworkSpec(input_dim, std::move(layers));
}

inline std::vector<WeightRef> trainable_weights(const ArchSpec& arch, const NetworkSpec& net) {
  std::vector<WeightRef> refs;
  for (std::size_t l = 0; l < arch.layers.size(); ++l) {
    if (!arch.layers[l].trainable) continue;
    auto layer_refs = weights_of_layers(net, l, l + 1);
    refs.insert(refs.end(), layer_refs.begin(), layer_refs.end());
  }
  return refs;
}

/// Resolves "w<i>,w<j>" to weight addresses. Indices run over the weights of
/// every layer after the first, flattened layer, neuron and entry order.
inline std::array<WeightRef, 2> parse_free_weights(const NetworkSpec& net, const std::string& text) {
  const std::vector<WeightRef> flat = weights_of_layers(net, 1, net.num_layers());
  std::array<WeightRef, 2> out{};
  std::stringstream in(text);
  std::string item;
  std::size_t n = 0;
  while (std::getline(in, item, ',')) {
    if (n == 2) throw Error(ErrorCode::InvalidArgument, "expected exactly two free weights");
    std::size_t used = 0;
    std::size_t index = 0;
    try {
      if (item.size() < 2 || item[0] != 'w') throw std::invalid_argument(item);
      index = std::stoul(item.substr(1), &used);
      if (used != item.size() - 1) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error(ErrorCode::InvalidArgument, "bad free weight '" + item + "', expected w<i>");
    }
    if (index >= flat.size()) {
      throw Error(ErrorCode::OutOfBounds, "free weight " + item + " out of range (network has " +
                                              std::to_string(flat.size()) + " trainable-layer weights)");
    }
    out[n++] = flat[index];
  }
  if (n != 2) throw Error(ErrorCode::InvalidArgument, "expected exactly two free weights");
  if (out[0].layer == out[1].layer && out[0].neuron == out[1].neuron && out[0].index == out[1].index) {
    throw Error(ErrorCode::InvalidArgument, "free weights must differ");
  }
  return out;
}

struct TrainingRun {
  NetworkSpec network;
  std::optional<TrainResult> training;
};

/// Prototype weights and training both use the decimated scene (points are
/// divided by the factor); the returned network applies at any resolution.
inline TrainingRun build_and_train(const ArchSpec& arch, const Image& img, const BinaryMask* gold,
                                   const std::vector<AnnotatedPoint>& points, TrainConfig train,
                                   const ProgressFn& progress = {}) {
  for (const auto& p : points) {
    if (!img.contains(p.x, p.y)) {
      throw Error(ErrorCode::OutOfBounds, "point (" + std::to_string(p.x) + "," + std::to_string(p.y) + ") outside image");
    }
  }
  const Image small = subsample(img, arch.subsample);
  std::vector<AnnotatedPoint> small_points;
  for (const auto& p : points) small_points.push_back(subsample(p, arch.subsample));

  TrainingRun run{build_network(arch, small, small_points), std::nullopt};
  if (!arch.has_trainable()) return run;
  if (!gold) throw Error(ErrorCode::InvalidArgument, "training needs a gold mask");
  if (gold->width() != img.width() || gold->height() != img.height()) {
    throw Error(ErrorCode::DimensionMismatch, "gold mask does not match image");
  }
  train.trainable = trainable_weights(arch, run.network);
  if (arch.init_as_start) train.explicit_starts.push_back(run.network.weights_at(train.trainable));
  run.training = multi_start_train(run.network, small, subsample(*gold, arch.subsample), arch.features, train, progress);
  run.network = run.training->network;
  return run;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct PipelineConfig {
  std::filesystem::path image;
  std::optional<std::filesystem::path> gold;
  std::optional<std::filesystem::path> points;
  std::optional<std::filesystem::path> network_in;  // pre-trained network: skips building/training
  ArchSpec arch;
  TrainConfig train;
  std::filesystem::path out_dir = ".";
  unsigned threads = default_threads();
};

struct ExperimentResult {
  SegmentationResult segmentation;
  NetworkSpec network;
  std::optional<TrainResult> training;
};

inline void write_raw_f32(const std::filesystem::path& path, const std::vector<double>& raw) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::FileNotFound, "cannot write " + path.string());
  for (double v : raw) {
    const float f = static_cast<float>(v);
    out.write(reinterpret_cast<const char*>(&f), sizeof f);
  }
}

inline nlohmann::json metrics_json(const SegmentationResult& r, const std::optional<TrainResult>& training) {
  nlohmann::json j{{"width", r.width},
                   {"height", r.height},
                   {"threshold", r.threshold},
                   {"object_pixels", r.mask.count()},
                   {"zero_vector_events", r.diagnostics.zero_vector_events},
                   {"elapsed_ms", r.diagnostics.elapsed_ms}};
  if (r.counts) {
    j["tp"] = r.counts->tp;
    j["fp"] = r.counts->fp;
    j["tn"] = r.counts->tn;
    j["fn"] = r.counts->fn;
  }
  if (r.balanced_accuracy) j["balanced_accuracy"] = *r.balanced_accuracy;
  if (training) {
    j["winner"] = training->winner;
    j["best_objective"] = training->best_objective();
    j["starts"] = training->trajectories.size();
  }
  return j;
}

/// Files: raw.f32 (float32 row-major), raw.pgm, mask.pgm, metrics.json,
/// network.json and trajectory_<k>.csv when training ran.
inline void write_artifacts(const std::filesystem::path& dir, const ExperimentResult& r) {
  std::filesystem::create_directories(dir);
  const auto& s = r.segmentation;
  write_raw_f32(dir / "raw.f32", s.raw);
  write_pnm(dir / "raw.pgm", values_to_raster(s.width, s.height, s.raw));
  write_mask_pgm(dir / "mask.pgm", s.mask);
  save_network(dir / "network.json", r.network);
  std::ofstream(dir / "metrics.json") << metrics_json(s, r.training).dump(2) << '\n';
  if (r.training) {
    for (std::size_t k = 0; k < r.training->trajectories.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof name, "trajectory_%02zu.csv", k);
      std::ofstream out(dir / name);
      write_trajectory_csv(out, r.training->trajectories[k]);
    }
  }
}

inline ExperimentResult run_experiment(const PipelineConfig& cfg) {
  const Image img = read_image(cfg.image);
  std::optional<BinaryMask> gold;
  if (cfg.gold) {
    gold = read_mask(*cfg.gold);
    if (gold->width() != img.width() || gold->height() != img.height()) {
      throw Error(ErrorCode::DimensionMismatch, "gold mask does not match image");
    }
  }

  ExperimentResult result;
  if (cfg.network_in) {
    result.network = load_network(*cfg.network_in);
  } else {
    const std::vector<AnnotatedPoint> points = cfg.points ? load_points(*cfg.points) : std::vector<AnnotatedPoint>{};
    TrainConfig train = cfg.train;
    train.threads = cfg.threads;
    TrainingRun run = build_and_train(cfg.arch, img, gold ? &*gold : nullptr, points, train);
    result.network = std::move(run.network);
    result.training = std::move(run.training);
  }
  if (result.network.input_dim() != feature_length(cfg.arch.features, img.channels())) {
    throw Error(ErrorCode::LengthMismatch, "network input does not match the feature radius and image channels");
  }
  result.segmentation = segment_image(img, result.network, cfg.arch.features, cfg.arch.threshold, cfg.threads);
  if (gold) score(result.segmentation, *gold);
  write_artifacts(cfg.out_dir, result);
  return result;
}

}  // namespace mmnn
