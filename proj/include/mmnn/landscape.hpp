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

// Exhaustive objective sweeps over two free weights, marching-squares level
// sets and basin counting on the resulting grid.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "mmnn/error.hpp"
#include "mmnn/image_io.hpp"
#include "mmnn/training.hpp"

namespace mmnn {

struct AxisRange {
  double lo = -1.0;
  double hi = 1.0;
};

/// Node count along an axis: both end points are sampled.
inline std::size_t axis_nodes(const AxisRange& r, double resolution) {
  if (!(resolution > 0.0)) throw Error(ErrorCode::InvalidArgument, "grid resolution must be > 0");
  if (!(r.hi >= r.lo)) throw Error(ErrorCode::InvalidArgument, "axis range is empty");
  return static_cast<std::size_t>(std::floor((r.hi - r.lo) / resolution + 1e-9)) + 1;
}

/// Row-major grid: column i runs along w1, row j along w2.
struct LandscapeGrid {
  AxisRange range1;
  AxisRange range2;
  double resolution = 0.05;
  std::size_t cols = 0;
  std::size_t rows = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> degenerate;  // cells whose evaluation hit all-zero operands
  std::size_t argmax_col = 0;
  std::size_t argmax_row = 0;

  double w1(std::size_t col) const { return range1.lo + static_cast<double>(col) * resolution; }
  double w2(std::size_t row) const { return range2.lo + static_cast<double>(row) * resolution; }
  double at(std::size_t col, std::size_t row) const { return values[row * cols + col]; }
  double max_value() const { return at(argmax_col, argmax_row); }

  /// First cell in row-major order attaining the maximum.
  void update_argmax() {
    std::size_t best = 0;
    for (std::size_t k = 1; k < values.size(); ++k) {
      if (values[k] > values[best]) best = k;
    }
    argmax_row = best / cols;
    argmax_col = best % cols;
  }
};

using GridFunction = std::function<double(double w1, double w2)>;

/// Evaluates f at every node in row-major order. AllZeroOperands at a node
/// stores 0 and marks the cell.
inline LandscapeGrid sweep(const GridFunction& f, AxisRange r1, AxisRange r2, double resolution) {
  LandscapeGrid g;
  g.range1 = r1;
  g.range2 = r2;
  g.resolution = resolution;
  g.cols = axis_nodes(r1, resolution);
  g.rows = axis_nodes(r2, resolution);
  g.values.assign(g.cols * g.rows, 0.0);
  g.degenerate.assign(g.cols * g.rows, 0);
  for (std::size_t j = 0; j < g.rows; ++j) {
    for (std::size_t i = 0; i < g.cols; ++i) {
      double v = 0.0;
      try {
        v = f(g.w1(i), g.w2(j));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::AllZeroOperands) throw;
        g.degenerate[j * g.cols + i] = 1;
      }
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "objective is not finite on the grid");
      g.values[j * g.cols + i] = v;
    }
  }
  g.update_argmax();
  return g;
}

/// Sweeps two weights of net over a labelled image; all other weights fixed.
inline LandscapeGrid sweep(const NetworkSpec& net, const Image& img, const BinaryMask& gold, const FeatureConfig& fcfg,
                           const std::array<WeightRef, 2>& free, AxisRange r1, AxisRange r2, double resolution,
                           const Objective& objective, unsigned threads = 1) {
  const SceneEvaluator eval(net, img, gold, fcfg, {free[0], free[1]}, objective, 0.0, threads);
  return sweep([&](double a, double b) { return eval(std::array<double, 2>{a, b}); }, r1, r2, resolution);
}

// ---------------------------------------------------------------------------
// Level sets
// ---------------------------------------------------------------------------

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct Contour {
  double level = 0.0;
  std::vector<Point2> points;
  bool closed = false;
};

namespace detail {

// Edge keys: horizontal edge (i,j)-(i+1,j) and vertical edge (i,j)-(i,j+1).
inline std::uint64_t h_edge(std::size_t i, std::size_t j, std::size_t cols) { return 2 * (j * cols + i); }
inline std::uint64_t v_edge(std::size_t i, std::size_t j, std::size_t cols) { return 2 * (j * cols + i) + 1; }

}  // namespace detail

/// Marching squares with linear interpolation along cell edges. Nodes with
/// value >= level count as inside; saddles are split by the cell-centre mean.
/// Segments are chained into polylines, closed when they return to the start.
inline std::vector<Contour> level_sets(const LandscapeGrid& g, std::span<const double> levels) {
  std::vector<Contour> contours;
  if (g.cols < 2 || g.rows < 2) return contours;

  for (double level : levels) {
    std::map<std::uint64_t, Point2> crossing;
    std::vector<std::array<std::uint64_t, 2>> segments;

    auto edge_point = [&](std::uint64_t key, std::size_t i0, std::size_t j0, std::size_t i1, std::size_t j1) {
      if (crossing.count(key)) return;
      const double a = g.at(i0, j0);
      const double b = g.at(i1, j1);
      const double t = (level - a) / (b - a);
      crossing[key] = {g.w1(i0) + t * (g.w1(i1) - g.w1(i0)), g.w2(j0) + t * (g.w2(j1) - g.w2(j0))};
    };

    for (std::size_t j = 0; j + 1 < g.rows; ++j) {
      for (std::size_t i = 0; i + 1 < g.cols; ++i) {
        const double v00 = g.at(i, j), v10 = g.at(i + 1, j), v11 = g.at(i + 1, j + 1), v01 = g.at(i, j + 1);
        const bool in00 = v00 >= level, in10 = v10 >= level, in11 = v11 >= level, in01 = v01 >= level;
        const std::uint64_t bottom = detail::h_edge(i, j, g.cols);
        const std::uint64_t top = detail::h_edge(i, j + 1, g.cols);
        const std::uint64_t left = detail::v_edge(i, j, g.cols);
        const std::uint64_t right = detail::v_edge(i + 1, j, g.cols);

        std::vector<std::uint64_t> cut;
        if (in00 != in10) edge_point(bottom, i, j, i + 1, j), cut.push_back(bottom);
        if (in10 != in11) edge_point(right, i + 1, j, i + 1, j + 1), cut.push_back(right);
        if (in01 != in11) edge_point(top, i, j + 1, i + 1, j + 1), cut.push_back(top);
        if (in00 != in01) edge_point(left, i, j, i, j + 1), cut.push_back(left);

        if (cut.size() == 2) {
          segments.push_back({cut[0], cut[1]});
        } else if (cut.size() == 4) {
          const bool centre_in = 0.25 * (v00 + v10 + v11 + v01) >= level;
          // in00 == in11 here; join so the centre's side stays connected.
          if (in00 == centre_in) {
            segments.push_back({bottom, right});
            segments.push_back({top, left});
          } else {
            segments.push_back({left, bottom});
            segments.push_back({right, top});
          }
        }
      }
    }

    // Chain segments through shared edge crossings.
    std::map<std::uint64_t, std::vector<std::size_t>> incident;
    for (std::size_t s = 0; s < segments.size(); ++s) {
      incident[segments[s][0]].push_back(s);
      incident[segments[s][1]].push_back(s);
    }
    std::vector<bool> used(segments.size(), false);
    auto trace = [&](std::size_t seed, std::uint64_t from) {
      Contour c;
      c.level = level;
      c.points.push_back(crossing.at(from));
      std::size_t seg = seed;
      std::uint64_t at = from;
      while (true) {
        used[seg] = true;
        const std::uint64_t next = segments[seg][0] == at ? segments[seg][1] : segments[seg][0];
        c.points.push_back(crossing.at(next));
        at = next;
        std::size_t follow = segments.size();
        for (std::size_t cand : incident[at]) {
          if (!used[cand]) {
            follow = cand;
            break;
          }
        }
        if (follow == segments.size()) break;
        seg = follow;
      }
      c.closed = c.points.size() > 2 && at == from;
      if (c.closed) c.points.pop_back();
      return c;
    };
    // Open polylines start at an end crossing (on the grid boundary).
    for (const auto& [edge, segs] : incident) {
      if (segs.size() == 1 && !used[segs[0]]) contours.push_back(trace(segs[0], edge));
    }
    for (std::size_t s = 0; s < segments.size(); ++s) {
      if (!used[s]) contours.push_back(trace(s, segments[s][0]));
    }
  }
  return contours;
}

// ---------------------------------------------------------------------------
// Basins
// ---------------------------------------------------------------------------

/// Local maxima under 8-connectivity; equal-valued connected cells form one
/// plateau, which counts once if no neighbour is strictly higher.
inline std::size_t basin_count(const LandscapeGrid& g) {
  const std::size_t n = g.values.size();
  std::vector<int> component(n, -1);
  std::size_t maxima = 0;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < n; ++start) {
    if (component[start] >= 0) continue;
    const double v = g.values[start];
    bool is_max = true;
    component[start] = static_cast<int>(start);
    stack.assign(1, start);
    while (!stack.empty()) {
      const std::size_t k = stack.back();
      stack.pop_back();
      const long r = static_cast<long>(k / g.cols), c = static_cast<long>(k % g.cols);
      for (long dr = -1; dr <= 1; ++dr) {
        for (long dc = -1; dc <= 1; ++dc) {
          const long rr = r + dr, cc = c + dc;
          if ((dr == 0 && dc == 0) || rr < 0 || cc < 0 || rr >= static_cast<long>(g.rows) ||
              cc >= static_cast<long>(g.cols)) {
            continue;
          }
          const std::size_t m = static_cast<std::size_t>(rr) * g.cols + static_cast<std::size_t>(cc);
          if (g.values[m] > v) is_max = false;
          if (g.values[m] == v && component[m] < 0) {
            component[m] = static_cast<int>(start);
            stack.push_back(m);
          }
        }
      }
    }
    if (is_max) ++maxima;
  }
  return maxima;
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

inline void write_grid_csv(std::ostream& out, const LandscapeGrid& g) {
  const auto old = out.precision(17);
  out << "w1,w2,value\n";
  for (std::size_t j = 0; j < g.rows; ++j) {
    for (std::size_t i = 0; i < g.cols; ++i) out << g.w1(i) << ',' << g.w2(j) << ',' << g.at(i, j) << '\n';
  }
  out.precision(old);
}

/// Grayscale heatmap, value 0 black and 1 white; w2 increases upwards.
inline Raster8 grid_heatmap(const LandscapeGrid& g) {
  std::vector<double> flipped(g.values.size());
  for (std::size_t j = 0; j < g.rows; ++j) {
    for (std::size_t i = 0; i < g.cols; ++i) flipped[(g.rows - 1 - j) * g.cols + i] = g.at(i, j);
  }
  return values_to_raster(static_cast<int>(g.cols), static_cast<int>(g.rows), flipped);
}

inline void write_contours_csv(std::ostream& out, const std::vector<Contour>& contours) {
  const auto old = out.precision(17);
  out << "contour_id,level,closed,w1,w2\n";
  for (std::size_t c = 0; c < contours.size(); ++c) {
    for (const auto& p : contours[c].points) {
      out << c << ',' << contours[c].level << ',' << (contours[c].closed ? 1 : 0) << ',' << p.x << ',' << p.y << '\n';
    }
  }
  out.precision(old);
}

inline nlohmann::json grid_to_json(const LandscapeGrid& g) {
  nlohmann::json w1 = nlohmann::json::array(), w2 = nlohmann::json::array(), rows = nlohmann::json::array();
  for (std::size_t i = 0; i < g.cols; ++i) w1.push_back(g.w1(i));
  for (std::size_t j = 0; j < g.rows; ++j) {
    w2.push_back(g.w2(j));
    rows.push_back(std::vector<double>(g.values.begin() + static_cast<std::ptrdiff_t>(j * g.cols),
                                       g.values.begin() + static_cast<std::ptrdiff_t>((j + 1) * g.cols)));
  }
  return {{"w1", w1},
          {"w2", w2},
          {"resolution", g.resolution},
          {"values", rows},
          {"degenerate", g.degenerate},
          {"argmax", {{"w1", g.w1(g.argmax_col)}, {"w2", g.w2(g.argmax_row)}, {"value", g.max_value()}}},
          {"basins", basin_count(g)}};
}

}  // namespace mmnn
