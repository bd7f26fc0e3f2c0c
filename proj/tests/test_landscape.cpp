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

#include <cmath>
#include <sstream>

#include "mmnn/landscape.hpp"

namespace mmnn {
namespace {

LandscapeGrid grid_of(const GridFunction& f, double res = 0.05) { return sweep(f, {}, {}, res); }

TEST(Sweep, NodeCountAndOrder) {
  const LandscapeGrid g = grid_of([](double a, double b) { return a + 10.0 * b; });
  EXPECT_EQ(g.cols, 41u);
  EXPECT_EQ(g.rows, 41u);
  EXPECT_EQ(g.values.size(), 1681u);
  EXPECT_EQ(g.w1(0), -1.0);
  EXPECT_NEAR(g.w1(40), 1.0, 1e-12);
  EXPECT_EQ(g.at(0, 0), -11.0);
  EXPECT_NEAR(g.at(40, 0), -9.0, 1e-12);
  EXPECT_EQ(axis_nodes({0.0, 1.0}, 0.3), 4u);
  EXPECT_EQ(axis_nodes({0.0, 0.0}, 0.3), 1u);
  EXPECT_THROW(axis_nodes({0.0, 1.0}, 0.0), Error);
  EXPECT_THROW(axis_nodes({1.0, 0.0}, 0.1), Error);
}

TEST(Sweep, ConstantGrid) {
  const LandscapeGrid g = grid_of([](double, double) { return 0.25; });
  for (double v : g.values) EXPECT_EQ(v, 0.25);
  EXPECT_EQ(g.argmax_col, 0u);
  EXPECT_EQ(g.argmax_row, 0u);
  EXPECT_EQ(basin_count(g), 1u);
  const std::vector<double> levels{0.25};
  for (const auto& c : level_sets(g, levels)) EXPECT_TRUE(c.points.empty());
}

TEST(Sweep, ArgmaxTiesToFirstInRowMajorOrder) {
  const LandscapeGrid g = grid_of([](double a, double b) { return (std::fabs(a) < 1e-9 || std::fabs(b - 0.5) < 1e-9) ? 1.0 : 0.0; });
  EXPECT_EQ(g.argmax_row, 0u);
  EXPECT_EQ(g.argmax_col, 20u);
}

TEST(Sweep, DegenerateCellsAreFlaggedAsZero) {
  const LandscapeGrid g = grid_of([](double a, double b) {
    if (a < -0.99 && b < -0.99) throw Error(ErrorCode::AllZeroOperands, "zero");
    return 0.5;
  });
  EXPECT_EQ(g.degenerate[0], 1);
  EXPECT_EQ(g.values[0], 0.0);
  EXPECT_EQ(g.degenerate[1], 0);
  EXPECT_THROW(grid_of([](double, double) -> double { throw Error(ErrorCode::InvalidArgument, "x"); }), Error);
  EXPECT_THROW(grid_of([](double, double) { return std::nan(""); }), Error);
}

TEST(LevelSets, ParaboloidCircleWithinOnePitch) {
  const double res = 0.05, radius = 0.6;
  const LandscapeGrid g = grid_of([](double a, double b) { return 1.0 - (a * a + b * b); }, res);
  const std::vector<double> levels{1.0 - radius * radius};
  const auto contours = level_sets(g, levels);
  ASSERT_EQ(contours.size(), 1u);
  EXPECT_TRUE(contours[0].closed);
  EXPECT_GT(contours[0].points.size(), 20u);
  for (const auto& p : contours[0].points) EXPECT_LT(std::fabs(std::hypot(p.x, p.y) - radius), res);
}

TEST(LevelSets, StepEdgeGivesOneOpenLine) {
  const LandscapeGrid g = grid_of([](double a, double) { return a > 0.12 ? 1.0 : 0.0; });
  const std::vector<double> levels{0.5};
  const auto contours = level_sets(g, levels);
  ASSERT_EQ(contours.size(), 1u);
  EXPECT_FALSE(contours[0].closed);
  EXPECT_EQ(contours[0].points.size(), g.rows);
  for (const auto& p : contours[0].points) {
    EXPECT_GT(p.x, 0.1 - 1e-12);
    EXPECT_LT(p.x, 0.15 + 1e-12);
  }
}

TEST(LevelSets, CrossingAtNodeValue) {
  // Nodes equal to the level are inside, so the crossing sits on them.
  const LandscapeGrid g = grid_of([](double a, double) { return a; }, 0.5);
  const std::vector<double> levels{0.0};
  const auto contours = level_sets(g, levels);
  ASSERT_EQ(contours.size(), 1u);
  for (const auto& p : contours[0].points) EXPECT_EQ(p.x, 0.0);
}

TEST(LevelSets, TwoBumpsGiveTwoLoops) {
  const LandscapeGrid g = grid_of([](double a, double b) {
    return std::exp(-((a - 0.5) * (a - 0.5) + b * b) / 0.05) + std::exp(-((a + 0.5) * (a + 0.5) + b * b) / 0.05);
  });
  const std::vector<double> levels{0.5, 0.8};
  const auto contours = level_sets(g, levels);
  ASSERT_EQ(contours.size(), 4u);
  for (const auto& c : contours) EXPECT_TRUE(c.closed);
}

TEST(Basins, Counts) {
  EXPECT_EQ(basin_count(grid_of([](double a, double b) { return -(a * a + b * b); })), 1u);
  EXPECT_EQ(basin_count(grid_of([](double a, double b) {
              return std::exp(-((a - 0.5) * (a - 0.5) + b * b) / 0.05) +
                     0.5 * std::exp(-((a + 0.5) * (a + 0.5) + b * b) / 0.05);
            })),
            2u);
  // A flat ridge plateau counts once.
  EXPECT_EQ(basin_count(grid_of([](double a, double) { return std::fabs(a) < 0.2 ? 1.0 : 0.0; })), 1u);
}

TEST(Export, CsvHeatmapJson) {
  const LandscapeGrid g = sweep([](double a, double b) { return a > 0 && b > 0 ? 1.0 : 0.0; }, {0.0, 1.0}, {0.0, 1.0}, 0.5);
  std::ostringstream csv;
  write_grid_csv(csv, g);
  EXPECT_EQ(csv.str(), "w1,w2,value\n0,0,0\n0.5,0,0\n1,0,0\n0,0.5,0\n0.5,0.5,1\n1,0.5,1\n0,1,0\n0.5,1,1\n1,1,1\n");
  const Raster8 heat = grid_heatmap(g);
  EXPECT_EQ(heat.data, (std::vector<std::uint8_t>{0, 255, 255, 0, 255, 255, 0, 0, 0}));
  const auto j = grid_to_json(g);
  EXPECT_EQ(j["values"].size(), 3u);
  EXPECT_EQ(j["argmax"]["w1"], 0.5);
  EXPECT_EQ(j["basins"], 1u);

  std::vector<Contour> cs{{0.5, {{0.0, 1.0}, {0.25, 0.5}}, false}};
  std::ostringstream ccsv;
  write_contours_csv(ccsv, cs);
  EXPECT_EQ(ccsv.str(), "contour_id,level,closed,w1,w2\n0,0.5,0,0,1\n0,0.5,0,0.25,0.5\n");
}

}  // namespace
}  // namespace mmnn
