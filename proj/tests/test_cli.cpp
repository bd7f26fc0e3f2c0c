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
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "mmnn/landscape.hpp"
#include "mmnn/pipeline.hpp"
#include "support/scenes.hpp"

namespace mmnn {
namespace {

namespace fs = std::filesystem;

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("mmnn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    const testing::Scene scene = testing::two_blob_scene(30, 0.02, 21);
    write_png(dir_ / "scene.png", rgb_to_raster(30, 30, scene.rgb.data()));
    write_mask_pgm(dir_ / "gold.pgm", scene.mask_of(1));
    std::ofstream(dir_ / "points.csv") << "x,y,role,class\n9,10,prototype,o\n2,2,counter,o\n";
    std::ofstream(dir_ / "arch.json") << R"({"radius": 1, "subsample": 1, "layers": [
      {"kind": "prototypes", "d": 3},
      {"kind": "dense", "activation": {"kind": "sigmoid", "a": 20, "b": 0}, "trainable": true}]})";
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args) const {
    const std::string cmd = std::string(MMNN_CLI) + " " + args + " > " + (dir_ / "stdout.txt").string() + " 2> " +
                            (dir_ / "stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
  std::string p(const char* name) const { return (dir_ / name).string(); }
  std::string train_args(const std::string& out) const {
    return "train --image " + p("scene.png") + " --gold " + p("gold.pgm") + " --points " + p("points.csv") + " --arch " +
           p("arch.json") + " --seed 5 --starts 4 --steps 20 --stepsize 0.05 --fdres 0.01 --objective a --out-dir " + out;
  }

  fs::path dir_;
};

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("segment --image x.png"), 1);
  EXPECT_EQ(run("segment --image x.png --net n.json --radius 1 --threshold 1.5"), 1);
  EXPECT_EQ(run(train_args(p("o")) + " --objective c"), 1);
  EXPECT_EQ(run(train_args(p("o")) + " --fdres 0"), 1);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(CliTest, DataErrorsExitTwo) {
  EXPECT_EQ(run("segment --image " + p("missing.png") + " --net n.json --radius 1 --threshold 0.5"), 2);
  std::ofstream(dir_ / "bad.json") << "{";
  EXPECT_EQ(run("segment --image " + p("scene.png") + " --net " + p("bad.json") + " --radius 1 --threshold 0.5"), 2);
  std::ofstream(dir_ / "points.csv") << "x,y,role,class\n99,10,prototype,o\n2,2,counter,o\n";
  EXPECT_EQ(run(train_args(p("o"))), 2);
}

TEST_F(CliTest, TrainSegmentLandscapeRoundTrip) {
  ASSERT_EQ(run(train_args(p("train"))), 0);
  for (const char* f : {"mask.pgm", "raw.f32", "raw.pgm", "network.json", "metrics.json", "trajectory_03.csv"}) {
    EXPECT_TRUE(fs::exists(dir_ / "train" / f)) << f;
  }
  ASSERT_EQ(run("segment --image " + p("scene.png") + " --net " + p("train/network.json") +
                " --radius 1 --threshold 0.5 --gold " + p("gold.pgm") + " --out-dir " + p("seg")),
            0);
  EXPECT_EQ(read_raster(dir_ / "seg" / "mask.pgm").data, read_raster(dir_ / "train" / "mask.pgm").data);
  // Wrong radius for the network is a data error.
  EXPECT_EQ(run("segment --image " + p("scene.png") + " --net " + p("train/network.json") + " --radius 2 --threshold 0.5"), 2);

  ASSERT_EQ(run("landscape --image " + p("scene.png") + " --gold " + p("gold.pgm") + " --net " +
                p("train/network.json") + " --free w0,w1 --range -1:1 --res 0.25 --out " + p("grid.csv") +
                " --heatmap " + p("grid.pgm") + " --contours " + p("contours.csv") + " --levels 0,5"),
            0);
  std::ifstream grid(dir_ / "grid.csv");
  std::string line;
  std::getline(grid, line);
  EXPECT_EQ(line, "w1,w2,value");
  std::size_t rows = 0;
  while (std::getline(grid, line)) ++rows;
  EXPECT_EQ(rows, 81u);
  EXPECT_EQ(read_raster(dir_ / "grid.pgm").width, 9);
  std::ifstream contours(dir_ / "contours.csv");
  std::getline(contours, line);
  EXPECT_EQ(line, "contour_id,level,closed,w1,w2");

  EXPECT_EQ(run("landscape --image " + p("scene.png") + " --gold " + p("gold.pgm") + " --net " +
                p("train/network.json") + " --free w0,w9 --out " + p("g.csv")),
            1);
  EXPECT_EQ(run("landscape --image " + p("scene.png") + " --gold " + p("gold.pgm") + " --net " +
                p("train/network.json") + " --free w0,w1 --range 1 --out " + p("g.csv")),
            1);
}

TEST_F(CliTest, RepeatedRunsAreBitIdentical) {
  ASSERT_EQ(run(train_args(p("a"))), 0);
  ASSERT_EQ(run(train_args(p("b"))), 0);
  for (const char* f : {"mask.pgm", "raw.f32", "network.json", "trajectory_00.csv", "trajectory_02.csv"}) {
    std::ifstream fa(dir_ / "a" / f, std::ios::binary), fb(dir_ / "b" / f, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
    EXPECT_FALSE(sa.empty()) << f;
    EXPECT_EQ(sa, sb) << f;
  }
}

}  // namespace
}  // namespace mmnn
