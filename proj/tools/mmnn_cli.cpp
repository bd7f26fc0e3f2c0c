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


// mmnn: segment, train, landscape and serve verbs.
//
// Exit status: 0 success, 1 usage error, 2 data error.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mmnn/landscape.hpp"
#include "mmnn/pipeline.hpp"
#include "mmnn/service.hpp"

namespace {

constexpr int kUsage = 1;
constexpr int kData = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

mmnn::AxisRange parse_range(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw UsageError("--range expects lo:hi");
  try {
    std::size_t a = 0, b = 0;
    const std::string lo = text.substr(0, colon), hi = text.substr(colon + 1);
    mmnn::AxisRange r{std::stod(lo, &a), std::stod(hi, &b)};
    if (a != lo.size() || b != hi.size()) throw std::invalid_argument(text);
    if (!(r.hi >= r.lo)) throw UsageError("--range needs lo <= hi");
    return r;
  } catch (const std::logic_error&) {
    throw UsageError("--range expects lo:hi, got '" + text + "'");
  }
}

/// Smallest radius whose feature length matches the network input.
int infer_radius(std::size_t input_dim, int channels) {
  for (int r = 0; r <= 256; ++r) {
    const std::size_t n = mmnn::feature_length({r, true}, channels);
    if (n == input_dim) return r;
    if (n > input_dim) break;
  }
  throw mmnn::Error(mmnn::ErrorCode::LengthMismatch,
                    "network input length " + std::to_string(input_dim) + " fits no feature radius");
}

void print_summary(const mmnn::ExperimentResult& r) {
  std::cout << mmnn::metrics_json(r.segmentation, r.training).dump(2) << '\n';
}

struct SegmentArgs {
  std::string image, net, gold, out_dir = ".";
  int radius = 3;
  double threshold = 0.5;
  bool no_sort = false;
  unsigned threads = mmnn::default_threads();
};

int run_segment(const SegmentArgs& a) {
  mmnn::PipelineConfig cfg;
  cfg.image = a.image;
  cfg.network_in = a.net;
  if (!a.gold.empty()) cfg.gold = a.gold;
  cfg.arch.features = {a.radius, !a.no_sort};
  cfg.arch.threshold = a.threshold;
  cfg.out_dir = a.out_dir;
  cfg.threads = a.threads;
  print_summary(mmnn::run_experiment(cfg));
  return 0;
}

struct TrainArgs {
  std::string image, gold, points, arch, out_dir = ".", objective = "a";
  std::uint64_t seed = 0;
  std::size_t starts = 10, steps = 30;
  double stepsize = 0.05, fdres = 0.01;
  std::optional<int> subsample;
  unsigned threads = mmnn::default_threads();
};

int run_train(const TrainArgs& a) {
  mmnn::PipelineConfig cfg;
  cfg.image = a.image;
  cfg.gold = a.gold;
  cfg.points = a.points;
  cfg.arch = mmnn::load_arch(a.arch);
  if (a.subsample) cfg.arch.subsample = *a.subsample;
  cfg.train.seed = a.seed;
  cfg.train.num_starts = a.starts;
  cfg.train.max_steps = a.steps;
  cfg.train.step_size = a.stepsize;
  cfg.train.fd_resolution = a.fdres;
  cfg.train.objective = a.objective == "ba" ? mmnn::Objective::ba(cfg.arch.threshold) : mmnn::Objective::a();
  try {
    cfg.train.validate();
  } catch (const mmnn::Error& e) {
    throw UsageError(e.what());
  }
  cfg.out_dir = a.out_dir;
  cfg.threads = a.threads;
  print_summary(mmnn::run_experiment(cfg));
  return 0;
}

struct LandscapeArgs {
  std::string image, gold, net, free, range = "-1:1", out, heatmap, contours, objective = "a";
  double res = 0.05, threshold = 0.5;
  std::optional<int> radius;
  std::vector<double> levels;
  bool no_sort = false;
  int subsample = 1;
  unsigned threads = mmnn::default_threads();
};

int run_landscape(const LandscapeArgs& a) {
  const mmnn::AxisRange range = parse_range(a.range);
  if (!(a.res > 0.0)) throw UsageError("--res must be > 0");
  if (a.subsample < 1) throw UsageError("--subsample must be >= 1");
  const mmnn::NetworkSpec net = mmnn::load_network(a.net);
  std::array<mmnn::WeightRef, 2> free{};
  try {
    free = mmnn::parse_free_weights(net, a.free);
  } catch (const mmnn::Error& e) {
    throw UsageError(e.what());
  }
  const mmnn::Image img = mmnn::read_image(a.image);
  const mmnn::BinaryMask gold = mmnn::read_mask(a.gold);
  if (gold.width() != img.width() || gold.height() != img.height()) {
    throw mmnn::Error(mmnn::ErrorCode::DimensionMismatch, "gold mask does not match image");
  }
  const mmnn::FeatureConfig fcfg{a.radius ? *a.radius : infer_radius(net.input_dim(), img.channels()), !a.no_sort};
  const mmnn::Objective objective = a.objective == "ba" ? mmnn::Objective::ba(a.threshold) : mmnn::Objective::a();
  const mmnn::LandscapeGrid grid = mmnn::sweep(net, mmnn::subsample(img, a.subsample), mmnn::subsample(gold, a.subsample),
                                               fcfg, free, range, range, a.res, objective, a.threads);
  {
    std::ofstream out(a.out);
    if (!out) throw mmnn::Error(mmnn::ErrorCode::FileNotFound, "cannot write " + a.out);
    mmnn::write_grid_csv(out, grid);
  }
  if (!a.heatmap.empty()) mmnn::write_pnm(a.heatmap, mmnn::grid_heatmap(grid));
  if (!a.contours.empty()) {
    std::ofstream out(a.contours);
    if (!out) throw mmnn::Error(mmnn::ErrorCode::FileNotFound, "cannot write " + a.contours);
    mmnn::write_contours_csv(out, mmnn::level_sets(grid, a.levels));
  }
  std::cout << nlohmann::json{{"cols", grid.cols},
                              {"rows", grid.rows},
                              {"max", grid.max_value()},
                              {"argmax", {grid.w1(grid.argmax_col), grid.w2(grid.argmax_row)}},
                              {"basins", mmnn::basin_count(grid)}}
                   .dump()
            << '\n';
  return 0;
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

struct ServeArgs {
  int port = 8080;
  std::string data_dir = "mmnn-data", host = "127.0.0.1", static_dir;
  unsigned threads = mmnn::default_threads();
};

int run_serve(const ServeArgs& a) {
  mmnn::ServiceConfig cfg;
  cfg.data_dir = a.data_dir;
  if (!a.static_dir.empty()) cfg.static_dir = a.static_dir;
  cfg.threads = a.threads;
  mmnn::Service service(cfg);
  httplib::Server svr;
  service.bind(svr);
  g_server = &svr;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  std::cerr << "listening on http://" << a.host << ':' << a.port << '\n';
  if (!svr.listen(a.host, a.port)) {
    std::cerr << "mmnn: cannot listen on " << a.host << ':' << a.port << '\n';
    return kData;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multiset neuronal network segmentation"};
  app.require_subcommand(1);

  SegmentArgs seg;
  auto* segment = app.add_subcommand("segment", "Segment an image with a trained network");
  segment->add_option("--image", seg.image, "Input image (PNG, PGM or PPM)")->required();
  segment->add_option("--net", seg.net, "Network JSON")->required();
  segment->add_option("--radius", seg.radius, "Feature disc radius")->required()->check(CLI::NonNegativeNumber);
  segment->add_option("--threshold", seg.threshold, "Output threshold")->required()->check(CLI::Range(0.0, 1.0));
  segment->add_option("--gold", seg.gold, "Gold mask for scoring");
  segment->add_option("--out-dir", seg.out_dir, "Artifact directory");
  segment->add_flag("--no-sort", seg.no_sort, "Keep neighbourhood samples in lattice order");
  segment->add_option("--threads", seg.threads)->check(CLI::PositiveNumber);

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Build a network from annotated points and train it");
  train->add_option("--image", tr.image)->required();
  train->add_option("--gold", tr.gold)->required();
  train->add_option("--points", tr.points, "CSV: x,y,role,class")->required();
  train->add_option("--arch", tr.arch, "Architecture JSON")->required();
  train->add_option("--seed", tr.seed);
  train->add_option("--starts", tr.starts)->check(CLI::NonNegativeNumber);
  train->add_option("--steps", tr.steps)->check(CLI::NonNegativeNumber);
  train->add_option("--stepsize", tr.stepsize);
  train->add_option("--fdres", tr.fdres);
  train->add_option("--objective", tr.objective)->check(CLI::IsMember({"a", "ba"}));
  train->add_option("--subsample", tr.subsample)->check(CLI::PositiveNumber);
  train->add_option("--out-dir", tr.out_dir);
  train->add_option("--threads", tr.threads)->check(CLI::PositiveNumber);

  LandscapeArgs ls;
  auto* landscape = app.add_subcommand("landscape", "Sweep two weights over a grid");
  landscape->add_option("--image", ls.image)->required();
  landscape->add_option("--gold", ls.gold)->required();
  landscape->add_option("--net", ls.net)->required();
  landscape->add_option("--free", ls.free, "w<i>,w<j>")->required();
  landscape->add_option("--range", ls.range, "lo:hi");
  landscape->add_option("--res", ls.res);
  landscape->add_option("--out", ls.out, "Grid CSV")->required();
  landscape->add_option("--heatmap", ls.heatmap, "Heatmap PGM");
  landscape->add_option("--contours", ls.contours, "Contour CSV");
  landscape->add_option("--levels", ls.levels, "Contour levels")->delimiter(',');
  landscape->add_option("--objective", ls.objective)->check(CLI::IsMember({"a", "ba"}));
  landscape->add_option("--threshold", ls.threshold)->check(CLI::Range(0.0, 1.0));
  landscape->add_option("--radius", ls.radius)->check(CLI::NonNegativeNumber);
  landscape->add_option("--subsample", ls.subsample);
  landscape->add_flag("--no-sort", ls.no_sort);
  landscape->add_option("--threads", ls.threads)->check(CLI::PositiveNumber);

  ServeArgs sv;
  auto* serve = app.add_subcommand("serve", "Run the HTTP annotation service");
  serve->add_option("--port", sv.port)->check(CLI::Range(0, 65535));
  serve->add_option("--data-dir", sv.data_dir);
  serve->add_option("--host", sv.host);
  serve->add_option("--static-dir", sv.static_dir);
  serve->add_option("--threads", sv.threads)->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    if (*segment) return run_segment(seg);
    if (*train) return run_train(tr);
    if (*landscape) return run_landscape(ls);
    if (*serve) return run_serve(sv);
  } catch (const UsageError& e) {
    std::cerr << "mmnn: " << e.what() << '\n';
    return kUsage;
  } catch (const mmnn::Error& e) {
    std::cerr << "mmnn: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "mmnn: " << e.what() << '\n';
    return kData;
  }
  return kUsage;
}
