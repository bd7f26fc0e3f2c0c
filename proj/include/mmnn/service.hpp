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

// Session-based HTTP front end: image upload, point editing, background
// training jobs polled by id, mask/raw/landscape retrieval.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "mmnn/landscape.hpp"
#include "mmnn/pipeline.hpp"

namespace mmnn {

/// Request body of POST .../train. Missing fields take the defaults below;
/// "arch" is a full architecture object, otherwise a two-layer
/// prototype/counter-prototype architecture is built from the flat fields.
struct TrainRequest {
  ArchSpec arch;
  TrainConfig train;
};

inline TrainRequest train_request_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::ParseError, "train body must be a JSON object");
  try {
    TrainRequest r;
    if (j.contains("arch")) {
      r.arch = arch_from_json(j.at("arch"));
    } else {
      r.arch = two_layer_arch(j.value("radius", 3), j.value("d", 3.0), j.value("gain", 20.0), j.value("offset", 0.0),
                              j.value("threshold", 0.5));
    }
    if (j.contains("subsample")) r.arch.subsample = j.at("subsample").get<int>();
    if (r.arch.subsample < 1) throw Error(ErrorCode::ParseError, "subsample must be >= 1");
    r.train.seed = j.value("seed", std::uint64_t{0});
    r.train.num_starts = j.value("starts", std::size_t{10});
    r.train.max_steps = j.value("steps", std::size_t{30});
    r.train.step_size = j.value("stepsize", 0.05);
    r.train.fd_resolution = j.value("fdres", 0.01);
    const std::string objective = j.value("objective", std::string("a"));
    if (objective == "a") {
      r.train.objective = Objective::a();
    } else if (objective == "ba") {
      r.train.objective = Objective::ba(r.arch.threshold);
    } else {
      throw Error(ErrorCode::ParseError, "objective must be 'a' or 'ba'");
    }
    r.train.validate();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("train body: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::ParseError) throw;
    throw Error(ErrorCode::ParseError, e.what());
  }
}

enum class JobStatus { Running, Done, Failed };

inline const char* to_string(JobStatus s) {
  switch (s) {
    case JobStatus::Running: return "running";
    case JobStatus::Done: return "done";
    case JobStatus::Failed: return "failed";
  }
  return "failed";
}

struct Job {
  std::string id;
  JobStatus status = JobStatus::Running;
  std::size_t done = 0;
  std::size_t total = 0;
  std::optional<double> balanced_accuracy;
  std::optional<double> best_objective;
  std::string error;
};

struct Session {
  std::string id;
  std::filesystem::path dir;
  Image image;
  std::optional<BinaryMask> gold;
  std::vector<AnnotatedPoint> points;
  std::optional<NetworkSpec> network;
  std::optional<ArchSpec> arch;
  std::optional<SegmentationResult> result;
  std::vector<Job> jobs;
  std::size_t next_job = 1;
  bool running = false;
  mutable std::mutex mutex;

  const Job* find_job(const std::string& jid) const {
    for (const auto& j : jobs) {
      if (j.id == jid) return &j;
    }
    return nullptr;
  }
  Job* find_job(const std::string& jid) { return const_cast<Job*>(std::as_const(*this).find_job(jid)); }
};

struct ServiceConfig {
  std::filesystem::path data_dir = "mmnn-data";
  std::optional<std::filesystem::path> static_dir;
  unsigned threads = default_threads();
  std::size_t max_grid_nodes = 401 * 401;
};

class Service {
 public:
  explicit Service(ServiceConfig cfg) : cfg_(std::move(cfg)), rng_(std::random_device{}()) {
    std::filesystem::create_directories(cfg_.data_dir);
  }
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  ~Service() {
    std::vector<std::thread> workers;
    {
      std::lock_guard lock(store_mutex_);
      workers.swap(workers_);
    }
    for (auto& t : workers) t.join();
  }

  /// Registers every route on svr. Static files are served from
  /// cfg.static_dir when it exists.
  void bind(httplib::Server& svr) {
    svr.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) { guard(res, [&] { create_session(req, res); }); });
    svr.Get(R"(/api/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] { get_session(req, res); });
    });
    svr.Post(R"(/api/sessions/([^/]+)/points)", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] { add_point(req, res); });
    });
    svr.Delete(R"(/api/sessions/([^/]+)/points/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] { delete_point(req, res); });
    });
    svr.Post(R"(/api/sessions/([^/]+)/train)", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] { start_training(req, res); });
    });
    svr.Get(R"(/api/sessions/([^/]+)/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] { get_job(req, res); });
    });
    svr.Get(R"(/api/sessions/([^/]+)/segmentation\.png)", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] { get_mask(req, res); });
    });
    svr.Get(R"(/api/sessions/([^/]+)/raw\.json)", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] { get_raw(req, res); });
    });
    svr.Get(R"(/api/sessions/([^/]+)/landscape)", [this](const httplib::Request& req, httplib::Response& res) {
      guard(res, [&] { get_landscape(req, res); });
    });
    if (cfg_.static_dir && std::filesystem::is_directory(*cfg_.static_dir)) {
      svr.set_mount_point("/", cfg_.static_dir->string());
    } else {
      svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("<!doctype html><title>mmnn</title><p>mmnn service: API under /api</p>\n", "text/html");
      });
    }
  }

  /// Blocks until the job finishes; for tests and scripted use.
  void wait(const std::string& sid, const std::string& jid) const {
    const auto s = find(sid);
    if (!s) return;
    for (;;) {
      {
        std::lock_guard lock(s->mutex);
        const Job* j = s->find_job(jid);
        if (!j || j->status != JobStatus::Running) return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }

 private:
  struct HttpError {
    int status;
    std::string message;
    std::string field;
  };

  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  template <class F>
  static void guard(httplib::Response& res, F&& body) {
    try {
      body();
    } catch (const HttpError& e) {
      nlohmann::json j{{"error", e.message}};
      if (!e.field.empty()) j["field"] = e.field;
      send_json(res, e.status, j);
    } catch (const Error& e) {
      send_json(res, 400, {{"error", e.what()}});
    } catch (const nlohmann::json::exception& e) {
      send_json(res, 400, {{"error", std::string("malformed JSON: ") + e.what()}});
    } catch (const std::exception& e) {
      send_json(res, 500, {{"error", e.what()}});
    }
  }

  std::string new_id() {
    std::uniform_int_distribution<std::uint64_t> u;
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(u(rng_)));
    return buf;
  }

  std::shared_ptr<Session> find(const std::string& sid) const {
    std::lock_guard lock(store_mutex_);
    const auto it = sessions_.find(sid);
    return it == sessions_.end() ? nullptr : it->second;
  }

  std::shared_ptr<Session> require(const httplib::Request& req) const {
    auto s = find(req.matches[1]);
    if (!s) throw HttpError{404, "unknown session '" + std::string(req.matches[1]) + "'", ""};
    return s;
  }

  static nlohmann::json points_json(const std::vector<AnnotatedPoint>& points) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& p : points) {
      out.push_back({{"x", p.x}, {"y", p.y}, {"role", to_string(p.role)}, {"class", p.class_label}});
    }
    return out;
  }

  static nlohmann::json job_json(const Job& j) {
    nlohmann::json out{{"id", j.id}, {"status", to_string(j.status)}, {"progress", {{"done", j.done}, {"total", j.total}}}};
    if (j.balanced_accuracy) out["balanced_accuracy"] = *j.balanced_accuracy;
    if (j.best_objective) out["best_objective"] = *j.best_objective;
    if (!j.error.empty()) out["error"] = j.error;
    return out;
  }

  // POST /api/sessions: multipart "image" (required) and "gold" (optional).
  void create_session(const httplib::Request& req, httplib::Response& res) {
    if (!req.has_file("image")) throw HttpError{400, "multipart field 'image' is required", "image"};
    const auto image_part = req.get_file_value("image");
    const std::vector<std::uint8_t> bytes(image_part.content.begin(), image_part.content.end());
    auto s = std::make_shared<Session>();
    try {
      s->image = raster_to_image(decode_raster(bytes));
    } catch (const Error& e) {
      throw HttpError{400, e.what(), "image"};
    }
    if (req.has_file("gold")) {
      const auto gold_part = req.get_file_value("gold");
      try {
        s->gold = raster_to_mask(decode_raster(std::vector<std::uint8_t>(gold_part.content.begin(), gold_part.content.end())));
      } catch (const Error& e) {
        throw HttpError{400, e.what(), "gold"};
      }
      if (s->gold->width() != s->image.width() || s->gold->height() != s->image.height()) {
        throw HttpError{400, "gold mask does not match image size", "gold"};
      }
    }
    {
      std::lock_guard lock(store_mutex_);
      do {
        s->id = new_id();
      } while (sessions_.count(s->id));
    }
    s->dir = cfg_.data_dir / s->id;
    std::filesystem::create_directories(s->dir);
    std::ofstream(s->dir / (is_png(bytes) ? "image.png" : "image.pnm"), std::ios::binary)
        .write(image_part.content.data(), static_cast<std::streamsize>(image_part.content.size()));
    if (s->gold) write_mask_pgm(s->dir / "gold.pgm", *s->gold);
    {
      std::lock_guard lock(store_mutex_);
      sessions_[s->id] = s;
    }
    send_json(res, 201, {{"id", s->id}, {"width", s->image.width()}, {"height", s->image.height()}, {"has_gold", s->gold.has_value()}});
  }

  void get_session(const httplib::Request& req, httplib::Response& res) {
    const auto s = require(req);
    std::lock_guard lock(s->mutex);
    nlohmann::json jobs = nlohmann::json::array();
    for (const auto& j : s->jobs) jobs.push_back(job_json(j));
    nlohmann::json out{{"id", s->id},          {"width", s->image.width()},   {"height", s->image.height()},
                       {"has_gold", s->gold.has_value()}, {"points", points_json(s->points)}, {"jobs", jobs},
                       {"status", s->running ? "running" : (s->jobs.empty() ? "idle" : to_string(s->jobs.back().status))}};
    if (s->result && s->result->balanced_accuracy) out["balanced_accuracy"] = *s->result->balanced_accuracy;
    send_json(res, 200, out);
  }

  void add_point(const httplib::Request& req, httplib::Response& res) {
    const auto s = require(req);
    const auto body = nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded() || !body.is_object()) throw HttpError{400, "body must be a JSON object", ""};
    AnnotatedPoint p;
    for (const char* key : {"x", "y"}) {
      if (!body.contains(key) || !body[key].is_number_integer()) throw HttpError{400, std::string(key) + " must be an integer", key};
    }
    p.x = body["x"].get<int>();
    p.y = body["y"].get<int>();
    if (!body.contains("role") || !body["role"].is_string()) throw HttpError{400, "role must be a string", "role"};
    try {
      p.role = point_role_from_string(body["role"].get<std::string>());
    } catch (const Error& e) {
      throw HttpError{400, e.what(), "role"};
    }
    if (body.contains("class")) {
      if (!body["class"].is_string()) throw HttpError{400, "class must be a string", "class"};
      p.class_label = body["class"].get<std::string>();
    } else {
      p.class_label = "object";
    }
    std::lock_guard lock(s->mutex);
    if (p.x < 0 || p.x >= s->image.width()) {
      throw HttpError{400, "x=" + std::to_string(p.x) + " outside [0," + std::to_string(s->image.width()) + ")", "x"};
    }
    if (p.y < 0 || p.y >= s->image.height()) {
      throw HttpError{400, "y=" + std::to_string(p.y) + " outside [0," + std::to_string(s->image.height()) + ")", "y"};
    }
    s->points.push_back(p);
    send_json(res, 200, points_json(s->points));
  }

  void delete_point(const httplib::Request& req, httplib::Response& res) {
    const auto s = require(req);
    const std::string text = req.matches[2];
    std::size_t n = 0;
    try {
      std::size_t used = 0;
      n = std::stoul(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
    } catch (const std::exception&) {
      throw HttpError{400, "point index must be a non-negative integer", "n"};
    }
    std::lock_guard lock(s->mutex);
    if (n >= s->points.size()) throw HttpError{404, "no point " + text, "n"};
    s->points.erase(s->points.begin() + static_cast<std::ptrdiff_t>(n));
    send_json(res, 200, points_json(s->points));
  }

  void start_training(const httplib::Request& req, httplib::Response& res) {
    const auto s = require(req);
    const auto body = req.body.empty() ? nlohmann::json::object() : nlohmann::json::parse(req.body, nullptr, false);
    if (body.is_discarded()) throw HttpError{400, "body is not valid JSON", ""};
    TrainRequest tr;
    try {
      tr = train_request_from_json(body);
    } catch (const Error& e) {
      throw HttpError{400, e.what(), ""};
    }
    tr.train.threads = cfg_.threads;

    std::lock_guard lock(s->mutex);
    if (s->running) throw HttpError{409, "a training job is already running", ""};
    if (tr.arch.has_trainable() && !s->gold) throw HttpError{400, "training needs a gold mask uploaded with the session", "gold"};
    Job job;
    job.id = "j" + std::to_string(s->next_job++);
    s->jobs.push_back(job);
    s->running = true;
    const std::vector<AnnotatedPoint> points = s->points;
    std::thread worker([this, s, tr, points, jid = job.id] { run_job(s, tr, points, jid); });
    {
      std::lock_guard store(store_mutex_);
      workers_.push_back(std::move(worker));
    }
    send_json(res, 202, {{"job", job.id}, {"status", "running"}});
  }

  void run_job(std::shared_ptr<Session> s, TrainRequest tr, std::vector<AnnotatedPoint> points, std::string jid) {
    try {
      const auto progress = [&](std::size_t done, std::size_t total) {
        std::lock_guard lock(s->mutex);
        if (Job* j = s->find_job(jid)) {
          j->done = done;
          j->total = total;
        }
      };
      TrainingRun run = build_and_train(tr.arch, s->image, s->gold ? &*s->gold : nullptr, points, tr.train, progress);
      SegmentationResult seg = segment_image(s->image, run.network, tr.arch.features, tr.arch.threshold, tr.train.threads);
      if (s->gold) score(seg, *s->gold);
      ExperimentResult artifacts{seg, run.network, run.training};
      write_artifacts(s->dir / jid, artifacts);

      std::lock_guard lock(s->mutex);
      Job* j = s->find_job(jid);
      j->balanced_accuracy = seg.balanced_accuracy;
      if (run.training) j->best_objective = run.training->best_objective();
      j->status = JobStatus::Done;
      s->network = std::move(run.network);
      s->arch = tr.arch;
      s->result = std::move(seg);
      s->running = false;
    } catch (const std::exception& e) {
      std::lock_guard lock(s->mutex);
      Job* j = s->find_job(jid);
      j->status = JobStatus::Failed;
      j->error = e.what();
      s->running = false;
    }
  }

  void get_job(const httplib::Request& req, httplib::Response& res) {
    const auto s = require(req);
    std::lock_guard lock(s->mutex);
    const Job* j = s->find_job(req.matches[2]);
    if (!j) throw HttpError{404, "unknown job '" + std::string(req.matches[2]) + "'", ""};
    send_json(res, 200, job_json(*j));
  }

  // Optional ?threshold= re-thresholds the latest raw outputs.
  void get_mask(const httplib::Request& req, httplib::Response& res) {
    const auto s = require(req);
    std::lock_guard lock(s->mutex);
    if (!s->result) throw HttpError{404, "no segmentation yet", ""};
    BinaryMask mask = s->result->mask;
    if (req.has_param("threshold")) {
      double t = 0.0;
      try {
        t = std::stod(req.get_param_value("threshold"));
      } catch (const std::exception&) {
        throw HttpError{400, "threshold must be a number", "threshold"};
      }
      if (!(t >= 0.0 && t <= 1.0)) throw HttpError{400, "threshold must be in [0,1]", "threshold"};
      mask = threshold_mask(s->result->width, s->result->height, s->result->raw, t);
    }
    const auto png = encode_png(mask_to_raster(mask));
    res.status = 200;
    res.set_content(std::string(png.begin(), png.end()), "image/png");
  }

  void get_raw(const httplib::Request& req, httplib::Response& res) {
    const auto s = require(req);
    std::lock_guard lock(s->mutex);
    if (!s->result) throw HttpError{404, "no segmentation yet", ""};
    send_json(res, 200, {{"width", s->result->width}, {"height", s->result->height}, {"values", s->result->raw}});
  }

  static double number_param(const httplib::Request& req, const char* key, double fallback) {
    if (!req.has_param(key)) return fallback;
    try {
      std::size_t used = 0;
      const std::string text = req.get_param_value(key);
      const double v = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument(text);
      return v;
    } catch (const std::exception&) {
      throw HttpError{400, std::string(key) + " must be a number", key};
    }
  }

  // ?free=w<i>,w<j>&res=R[&lo=&hi=&objective=a|ba&subsample=N]
  void get_landscape(const httplib::Request& req, httplib::Response& res) {
    const auto s = require(req);
    NetworkSpec net;
    ArchSpec arch;
    {
      std::lock_guard lock(s->mutex);
      if (!s->network) throw HttpError{404, "no trained network yet", ""};
      net = *s->network;
      arch = *s->arch;
    }
    if (!s->gold) throw HttpError{400, "landscape needs a gold mask", "gold"};
    if (!req.has_param("free")) throw HttpError{400, "free=w<i>,w<j> is required", "free"};
    std::array<WeightRef, 2> free{};
    try {
      free = parse_free_weights(net, req.get_param_value("free"));
    } catch (const Error& e) {
      throw HttpError{400, e.what(), "free"};
    }
    const double resolution = number_param(req, "res", 0.05);
    const AxisRange range{number_param(req, "lo", -1.0), number_param(req, "hi", 1.0)};
    const double factor = number_param(req, "subsample", 1.0);
    if (!(resolution > 0.0)) throw HttpError{400, "res must be > 0", "res"};
    if (!(range.hi >= range.lo)) throw HttpError{400, "hi must be >= lo", "hi"};
    if (!(factor >= 1.0) || factor != std::floor(factor)) throw HttpError{400, "subsample must be a positive integer", "subsample"};
    const std::size_t nodes = axis_nodes(range, resolution);
    if (nodes * nodes > cfg_.max_grid_nodes) throw HttpError{400, "grid too large", "res"};
    const std::string objective = req.has_param("objective") ? req.get_param_value("objective") : "a";
    if (objective != "a" && objective != "ba") throw HttpError{400, "objective must be 'a' or 'ba'", "objective"};

    const int f = static_cast<int>(factor);
    const LandscapeGrid grid = sweep(net, subsample(s->image, f), subsample(*s->gold, f), arch.features, free, range, range,
                                     resolution, objective == "a" ? Objective::a() : Objective::ba(arch.threshold),
                                     cfg_.threads);
    send_json(res, 200, grid_to_json(grid));
  }

  ServiceConfig cfg_;
  std::mt19937_64 rng_;
  mutable std::mutex store_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::vector<std::thread> workers_;
};

}  // namespace mmnn
