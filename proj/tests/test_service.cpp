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

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include "mmnn/service.hpp"
#include "support/scenes.hpp"

namespace mmnn {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

const json kArch = json::parse(R"({
  "radius": 1, "threshold": 0.5, "subsample": 2,
  "layers": [
    {"kind": "prototypes", "d": 3, "mode": "signed"},
    {"kind": "dense", "neurons": 1, "d": 1, "mode": "signed",
     "activation": {"kind": "sigmoid", "a": 20, "b": 0}, "trainable": true}
  ]})");

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("mmnn_service_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    ServiceConfig cfg;
    cfg.data_dir = dir_ / "data";
    cfg.threads = 2;
    service_ = std::make_unique<Service>(cfg);
    service_->bind(server_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
    client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    client_->set_read_timeout(60, 0);

    scene_ = testing::two_blob_scene(40, 0.02, 11);
    const auto png = encode_png(rgb_to_raster(40, 40, scene_.rgb.data()));
    png_.assign(png.begin(), png.end());
    const auto gold = encode_png(mask_to_raster(scene_.mask_of(1)));
    gold_png_.assign(gold.begin(), gold.end());
  }

  void TearDown() override {
    server_.stop();
    thread_.join();
    client_.reset();
    service_.reset();
    fs::remove_all(dir_);
  }

  std::string create(bool with_gold = true) {
    httplib::MultipartFormDataItems items{{"image", png_, "scene.png", "image/png"}};
    if (with_gold) items.push_back({"gold", gold_png_, "gold.png", "image/png"});
    const auto res = client_->Post("/api/sessions", items);
    EXPECT_TRUE(res);
    EXPECT_EQ(res->status, 201);
    return json::parse(res->body).at("id").get<std::string>();
  }

  httplib::Result post_json(const std::string& path, const json& body) {
    return client_->Post(path, body.dump(), "application/json");
  }

  std::string train(const std::string& sid, const json& body) {
    const auto res = post_json("/api/sessions/" + sid + "/train", body);
    EXPECT_EQ(res->status, 202) << res->body;
    return json::parse(res->body).at("job").get<std::string>();
  }

  fs::path dir_;
  std::unique_ptr<Service> service_;
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
  std::unique_ptr<httplib::Client> client_;
  testing::Scene scene_;
  std::string png_, gold_png_;
};

json train_body(std::uint64_t seed) {
  return {{"arch", kArch}, {"seed", seed}, {"starts", 3}, {"steps", 8}, {"stepsize", 0.05}, {"fdres", 0.01}, {"objective", "a"}};
}

TEST_F(ServiceTest, UploadValidation) {
  EXPECT_EQ(client_->Post("/api/sessions", httplib::MultipartFormDataItems{})->status, 400);
  const auto bad = client_->Post("/api/sessions", httplib::MultipartFormDataItems{{"image", "not an image", "x.png", "image/png"}});
  EXPECT_EQ(bad->status, 400);
  EXPECT_EQ(json::parse(bad->body)["field"], "image");
  const auto small = encode_png(mask_to_raster(BinaryMask(3, 3)));
  const auto mismatch = client_->Post("/api/sessions", httplib::MultipartFormDataItems{
                                                           {"image", png_, "scene.png", "image/png"},
                                                           {"gold", std::string(small.begin(), small.end()), "g.png", "image/png"}});
  EXPECT_EQ(mismatch->status, 400);
  EXPECT_EQ(client_->Get("/api/sessions/nope")->status, 404);
  EXPECT_EQ(client_->Get("/")->status, 200);
}

TEST_F(ServiceTest, PointsEditing) {
  const std::string sid = create();
  const std::string base = "/api/sessions/" + sid;
  auto res = post_json(base + "/points", {{"x", 12}, {"y", 14}, {"role", "prototype"}, {"class", "o"}});
  ASSERT_EQ(res->status, 200);
  res = post_json(base + "/points", {{"x", 3}, {"y", 3}, {"role", "counter"}});
  ASSERT_EQ(res->status, 200);
  const json list = json::parse(res->body);
  ASSERT_EQ(list.size(), 2u);
  EXPECT_EQ(list[1]["role"], "counter");
  EXPECT_EQ(list[1]["class"], "object");

  res = post_json(base + "/points", {{"x", 40}, {"y", 1}, {"role", "prototype"}});
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body)["field"], "x");
  res = post_json(base + "/points", {{"x", 1}, {"y", -1}, {"role", "prototype"}});
  EXPECT_EQ(json::parse(res->body)["field"], "y");
  res = post_json(base + "/points", {{"x", 1}, {"y", 1}, {"role", "sideways"}});
  EXPECT_EQ(json::parse(res->body)["field"], "role");
  EXPECT_EQ(client_->Post(base + "/points", "{oops", "application/json")->status, 400);
  EXPECT_EQ(post_json("/api/sessions/zzz/points", {{"x", 1}, {"y", 1}, {"role", "p"}})->status, 404);

  EXPECT_EQ(client_->Delete(base + "/points/5")->status, 404);
  EXPECT_EQ(client_->Delete(base + "/points/x")->status, 400);
  res = client_->Delete(base + "/points/0");
  ASSERT_EQ(res->status, 200);
  EXPECT_EQ(json::parse(res->body).size(), 1u);
  EXPECT_EQ(json::parse(client_->Get(base)->body)["points"].size(), 1u);
}

TEST_F(ServiceTest, TrainPollAndFetch) {
  const std::string sid = create();
  const std::string base = "/api/sessions/" + sid;
  EXPECT_EQ(client_->Get(base + "/segmentation.png")->status, 404);
  EXPECT_EQ(client_->Get(base + "/raw.json")->status, 404);
  EXPECT_EQ(json::parse(client_->Get(base)->body)["status"], "idle");
  post_json(base + "/points", {{"x", 12}, {"y", 14}, {"role", "prototype"}});
  post_json(base + "/points", {{"x", 3}, {"y", 3}, {"role", "counter"}});

  EXPECT_EQ(post_json(base + "/train", {{"objective", "c"}})->status, 400);
  EXPECT_EQ(client_->Post(base + "/train", "[", "application/json")->status, 400);

  const std::string jid = train(sid, train_body(3));
  std::string previous = "running";
  for (;;) {
    const auto res = client_->Get(base + "/jobs/" + jid);
    ASSERT_EQ(res->status, 200);
    const std::string status = json::parse(res->body)["status"];
    ASSERT_TRUE(status == "running" || status == "done") << res->body;
    ASSERT_FALSE(previous == "done" && status == "running");
    previous = status;
    if (status == "done") break;
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  const json job = json::parse(client_->Get(base + "/jobs/" + jid)->body);
  ASSERT_TRUE(job.contains("balanced_accuracy"));
  EXPECT_GT(job["balanced_accuracy"].get<double>(), 0.9);
  EXPECT_EQ(job["progress"]["done"], 3);

  const auto png = client_->Get(base + "/segmentation.png");
  ASSERT_EQ(png->status, 200);
  EXPECT_EQ(png->get_header_value("Content-Type"), "image/png");
  const BinaryMask mask = raster_to_mask(decode_png(std::vector<std::uint8_t>(png->body.begin(), png->body.end())));
  EXPECT_EQ(mask.width(), 40);
  const json raw = json::parse(client_->Get(base + "/raw.json")->body);
  EXPECT_EQ(raw["values"].size(), 1600u);
  const auto all = client_->Get(base + "/segmentation.png?threshold=0");
  EXPECT_EQ(raster_to_mask(decode_png(std::vector<std::uint8_t>(all->body.begin(), all->body.end()))).count(), 1600u);
  EXPECT_EQ(client_->Get(base + "/segmentation.png?threshold=abc")->status, 400);
  EXPECT_EQ(client_->Get(base + "/jobs/j99")->status, 404);

  // Finished jobs keep their result; retraining issues a new id.
  const std::string jid2 = train(sid, train_body(4));
  EXPECT_NE(jid2, jid);
  service_->wait(sid, jid2);
  EXPECT_EQ(json::parse(client_->Get(base + "/jobs/" + jid)->body), job);
}

TEST_F(ServiceTest, ConflictWhileRunning) {
  const std::string sid = create();
  const std::string base = "/api/sessions/" + sid;
  post_json(base + "/points", {{"x", 12}, {"y", 14}, {"role", "prototype"}});
  post_json(base + "/points", {{"x", 3}, {"y", 3}, {"role", "counter"}});
  json slow = train_body(1);
  slow["starts"] = 40;
  slow["steps"] = 30;
  slow["subsample"] = 1;
  const std::string jid = train(sid, slow);
  EXPECT_EQ(post_json(base + "/train", train_body(2))->status, 409);
  service_->wait(sid, jid);
  EXPECT_EQ(post_json(base + "/train", train_body(2))->status, 202);
}

TEST_F(ServiceTest, TrainingWithoutGoldOrPointsIsRejected) {
  const std::string no_gold = create(false);
  EXPECT_EQ(post_json("/api/sessions/" + no_gold + "/train", train_body(1))->status, 400);
  const std::string no_points = create();
  const std::string jid = train(no_points, train_body(1));
  service_->wait(no_points, jid);
  const json job = json::parse(client_->Get("/api/sessions/" + no_points + "/jobs/" + jid)->body);
  EXPECT_EQ(job["status"], "failed");
  EXPECT_FALSE(job["error"].get<std::string>().empty());
}

TEST_F(ServiceTest, Landscape) {
  const std::string sid = create();
  const std::string base = "/api/sessions/" + sid;
  EXPECT_EQ(client_->Get(base + "/landscape?free=w0,w1")->status, 404);
  post_json(base + "/points", {{"x", 12}, {"y", 14}, {"role", "prototype"}});
  post_json(base + "/points", {{"x", 3}, {"y", 3}, {"role", "counter"}});
  service_->wait(sid, train(sid, train_body(5)));
  const auto res = client_->Get(base + "/landscape?free=w0,w1&res=0.25&subsample=2");
  ASSERT_EQ(res->status, 200) << res->body;
  const json grid = json::parse(res->body);
  EXPECT_EQ(grid["w1"].size(), 9u);
  EXPECT_EQ(grid["values"].size(), 9u);
  EXPECT_GE(grid["basins"].get<int>(), 1);
  EXPECT_EQ(client_->Get(base + "/landscape?free=w0,w7")->status, 400);
  EXPECT_EQ(client_->Get(base + "/landscape?free=w0,w1&res=0")->status, 400);
  EXPECT_EQ(client_->Get(base + "/landscape?free=w0,w1&res=0.0001")->status, 400);
  EXPECT_EQ(client_->Get(base + "/landscape")->status, 400);
}

TEST_F(ServiceTest, MaskMatchesCommandLine) {
  const fs::path work = dir_ / "cli";
  fs::create_directories(work);
  std::ofstream(work / "scene.png", std::ios::binary) << png_;
  std::ofstream(work / "gold.png", std::ios::binary) << gold_png_;
  std::ofstream(work / "points.csv") << "x,y,role,class\n12,14,prototype,o\n3,3,counter,o\n";
  std::ofstream(work / "arch.json") << kArch.dump();
  const std::string cmd = std::string(MMNN_CLI) + " train --image " + (work / "scene.png").string() + " --gold " +
                          (work / "gold.png").string() + " --points " + (work / "points.csv").string() + " --arch " +
                          (work / "arch.json").string() +
                          " --seed 7 --starts 10 --steps 30 --stepsize 0.05 --fdres 0.01 --objective a --out-dir " +
                          (work / "out").string() + " > " + (work / "log.txt").string();
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  const Raster8 cli = read_raster(work / "out" / "mask.pgm");

  const std::string sid = create();
  const std::string base = "/api/sessions/" + sid;
  post_json(base + "/points", {{"x", 12}, {"y", 14}, {"role", "prototype"}, {"class", "o"}});
  post_json(base + "/points", {{"x", 3}, {"y", 3}, {"role", "counter"}, {"class", "o"}});
  json body = train_body(7);
  body["starts"] = 10;
  body["steps"] = 30;
  service_->wait(sid, train(sid, body));
  const auto png = client_->Get(base + "/segmentation.png");
  ASSERT_EQ(png->status, 200);
  const Raster8 served = decode_png(std::vector<std::uint8_t>(png->body.begin(), png->body.end()));
  EXPECT_EQ(served.width, cli.width);
  EXPECT_EQ(served.channels, 1);
  EXPECT_EQ(served.data, cli.data);
  EXPECT_GT(raster_to_mask(served).count(), 0u);
}

}  // namespace
}  // namespace mmnn
