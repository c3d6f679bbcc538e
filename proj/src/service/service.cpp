#include "reid/service.hpp"

#include <chrono>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "reid/corpus.hpp"
#include "reid/formats.hpp"
#include "reid/gallery_store.hpp"
#include "reid/image_io.hpp"
#include "reid/pipeline.hpp"

namespace reid {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

enum class QueryStatus { kProcessing, kDone, kFailed };

const char* to_string(QueryStatus s) {
  switch (s) {
    case QueryStatus::kProcessing: return "processing";
    case QueryStatus::kDone: return "done";
    case QueryStatus::kFailed: return "failed";
  }
  return "failed";
}

struct Query {
  std::string id;
  std::vector<CaptureImage> captures;  // dropped once features exist
  std::vector<CaptureRecord> records;
  std::vector<QueryImage> prepared;
  QueryStatus status = QueryStatus::kProcessing;
  std::string error;
  std::optional<RankedCandidates> result;
  std::string similarity_mode;
  bool busy = false;  // a decision is being written
  bool final = false;
  std::vector<DecisionRecord> decisions;
};

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kConflict: return 409;
    case ErrorCode::kIo: return 500;
    default: return 400;
  }
}

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, json{{"error", message}});
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

CaptureDate utc_today() {
  const auto days = std::chrono::floor<std::chrono::days>(std::chrono::system_clock::now());
  return CaptureDate(static_cast<int32_t>(days.time_since_epoch().count()));
}

std::string image_extension(const std::string& bytes) {
  return bytes.size() >= 2 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
                 static_cast<unsigned char>(bytes[1]) == 0xD8
             ? ".jpg"
             : ".png";
}

std::string content_type_for(const std::string& path) {
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  return "image/png";
}

std::vector<int> parse_rotations(const httplib::Request& req, size_t n) {
  std::vector<int> out;
  std::vector<std::string> raw;
  for (const auto& f : req.get_file_values("rotations")) {
    std::stringstream ss(f.content);
    std::string item;
    while (std::getline(ss, item, ',')) raw.push_back(item);
  }
  for (const auto& f : req.get_file_values("rotation")) raw.push_back(f.content);
  for (const auto& r : raw) {
    try {
      size_t used = 0;
      const int v = std::stoi(r, &used);
      if (used != r.size() || v < 0 || v > 3) throw std::invalid_argument(r);
      out.push_back(v);
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kInvalidArgument, "rotation must be an integer 0-3, got '" + r + "'");
    }
  }
  if (out.empty()) out.assign(n, 0);
  if (out.size() == 1 && n > 1) out.assign(n, out.front());
  if (out.size() != n) throw Error(ErrorCode::kInvalidArgument, "one rotation per image expected");
  return out;
}

json decision_json(const DecisionRecord& r) { return json::parse(format_decision(r)); }

}  // namespace

struct Service::Impl {
  AppConfig config;
  std::string dir;
  std::string static_dir;
  std::unique_ptr<GalleryStore> store;
  httplib::Server server;
  int port = -1;
  std::thread server_thread;

  std::mutex mutex;
  std::condition_variable cv;
  std::condition_variable idle_cv;
  std::map<std::string, std::shared_ptr<Query>> queries;
  std::deque<std::shared_ptr<Query>> pending;
  size_t active = 0;
  bool stopping = false;
  uint64_t next_query = 1;
  std::vector<std::thread> workers;

  Impl(const AppConfig& cfg, const std::string& gallery_dir, const std::string& static_root)
      : config(cfg), dir(gallery_dir), static_dir(static_root) {
    config.validate();
    store = fs::exists(fs::path(dir) / "manifest.csv") ? GalleryStore::open(dir)
                                                       : GalleryStore::create(dir);
    fs::create_directories(fs::path(dir) / "uploads");
    next_query = first_free_query_number();
    restore_decisions();
    routes();
    for (unsigned i = 0; i < config.service.workers; ++i) workers.emplace_back([this] { work(); });
  }

  ~Impl() {
    {
      std::lock_guard lock(mutex);
      stopping = true;
    }
    cv.notify_all();
    for (auto& w : workers) w.join();
  }

  uint64_t first_free_query_number() const {
    uint64_t top = 0;
    auto consider = [&](const std::string& name) {
      if (name.size() < 7 || name[0] != 'q') return;
      const std::string digits = name.substr(1, 6);
      if (digits.find_first_not_of("0123456789") != std::string::npos) return;
      top = std::max<uint64_t>(top, std::stoull(digits));
    };
    for (const auto& f : fs::directory_iterator(fs::path(dir) / "uploads")) {
      consider(f.path().filename().string());
    }
    for (const auto& r : store->snapshot()->decision_log) consider(r.query_id);
    return top + 1;
  }

  // Decisions of earlier server runs still block re-deciding those ids.
  void restore_decisions() {
    for (const auto& r : store->snapshot()->decision_log) {
      if (r.query_id.empty()) continue;
      auto& q = queries[r.query_id];
      if (!q) {
        q = std::make_shared<Query>();
        q->id = r.query_id;
        q->status = QueryStatus::kFailed;
        q->error = "query from an earlier session; results not retained";
      }
      q->decisions.push_back(r);
      if (r.action != DecisionAction::kDefer) q->final = true;
    }
  }

  double current_threshold() const {
    const std::string mode = reid::to_string(config.pipeline.match.similarity_mode);
    if (!config.service.threshold_name.empty()) {
      if (auto t = store->thresholds().get(mode, config.service.threshold_name)) return *t;
    }
    return config.pipeline.open_set_threshold;
  }

  void work() {
    for (;;) {
      std::shared_ptr<Query> q;
      {
        std::unique_lock lock(mutex);
        cv.wait(lock, [&] { return stopping || !pending.empty(); });
        if (stopping) return;
        q = pending.front();
        pending.pop_front();
        ++active;
      }
      process(*q);
      {
        std::lock_guard lock(mutex);
        --active;
      }
      idle_cv.notify_all();
    }
  }

  void process(Query& q) {
    std::vector<QueryImage> prepared;
    std::optional<RankedCandidates> result;
    std::string error;
    try {
      for (const auto& c : q.captures) {
        prepared.push_back(prepare_query(c, config.detector, config.embedding));
      }
      const std::shared_ptr<const Gallery> snapshot = store->snapshot();
      const GalleryIndex index(*snapshot);
      PipelineConfig pc = config.pipeline;
      pc.open_set_threshold = current_threshold();
      bool embeddings = true;
      for (const auto& [id, e] : snapshot->entries) embeddings = embeddings && e.embedding;
      result = embeddings ? identify_two_stage(prepared, index, pc) : identify_local(prepared, index, pc);
    } catch (const std::exception& e) {
      error = e.what();
    }
    std::lock_guard lock(mutex);
    q.captures.clear();
    q.prepared = std::move(prepared);
    q.similarity_mode = reid::to_string(config.pipeline.match.similarity_mode);
    if (result) {
      q.result = std::move(result);
      q.status = QueryStatus::kDone;
    } else {
      q.error = error;
      q.status = QueryStatus::kFailed;
    }
  }

  std::string image_url(const std::string& image_id) const { return "/api/images/" + image_id; }

  // Caller holds mutex.
  json query_view(const Query& q) const {
    json out;
    out["query_id"] = q.id;
    out["status"] = to_string(q.status);
    if (q.status == QueryStatus::kFailed) out["error"] = q.error;
    json images = json::array();
    for (const auto& r : q.records) {
      images.push_back({{"image_id", r.image_id},
                        {"url", image_url(r.image_id)},
                        {"capture_date", r.capture_date.iso()},
                        {"rotation_quarter_turns", r.rotation_quarter_turns}});
    }
    out["images"] = images;
    json candidates = json::array();
    json stage1 = json::array();
    out["threshold"] = nullptr;
    out["similarity_mode"] = q.similarity_mode.empty() ? nullptr : json(q.similarity_mode);
    out["decision"] = nullptr;
    if (q.result) {
      const std::shared_ptr<const Gallery> g = store->snapshot();
      const RankedCandidates& r = *q.result;
      size_t rank = 0;
      for (const auto& c : r.stage2) {
        const GalleryEntry* e = g->find(c.image_id);
        candidates.push_back({{"rank", ++rank},
                              {"image_id", c.image_id},
                              {"identity_id", c.identity_id},
                              {"score", c.score},
                              {"scored", c.scored},
                              {"stage1_score", c.stage1_score ? json(*c.stage1_score) : json(nullptr)},
                              {"above_threshold", c.scored && c.score >= r.threshold_used},
                              {"capture_date", e ? json(e->capture.capture_date.iso()) : json(nullptr)},
                              {"rotation_quarter_turns", e ? e->capture.rotation_quarter_turns : 0},
                              {"url", image_url(c.image_id)}});
      }
      for (size_t i = 0; i < r.stage1.size(); ++i) {
        json list = json::array();
        for (const auto& s : r.stage1[i]) list.push_back({{"image_id", s.image_id}, {"score", s.score}});
        stage1.push_back({{"query_image_id", r.query_image_ids[i]}, {"shortlist", list}});
      }
      out["threshold"] = r.threshold_used;
      const Decision& d = r.decision;
      out["decision"] = {{"kind", d.is_match() ? "Match" : "NewIndividual"},
                         {"identity_id", d.identity_id ? json(*d.identity_id) : json(nullptr)},
                         {"image_id", d.image_id ? json(*d.image_id) : json(nullptr)},
                         {"score", d.score}};
    }
    out["candidates"] = candidates;
    out["stage1"] = stage1;
    out["decided"] = q.final;
    json reviews = json::array();
    for (const auto& d : q.decisions) reviews.push_back(decision_json(d));
    out["reviews"] = reviews;
    return out;
  }

  void post_query(const httplib::Request& req, httplib::Response& res) {
    if (!req.is_multipart_form_data()) {
      return send_error(res, 400, "multipart/form-data body expected");
    }
    auto images = req.get_file_values("images");
    for (auto& f : req.get_file_values("image")) images.push_back(f);
    if (images.empty()) return send_error(res, 400, "at least one image is required");
    const auto masks = req.get_file_values("masks");
    if (!masks.empty() && masks.size() != images.size()) {
      return send_error(res, 400, "one mask per image expected");
    }

    std::vector<int> rotations;
    CaptureDate date = utc_today();
    try {
      rotations = parse_rotations(req, images.size());
      if (req.has_file("capture_date")) date = CaptureDate::parse(req.get_file_value("capture_date").content);
    } catch (const Error& e) {
      return send_error(res, 400, e.what());
    }

    auto q = std::make_shared<Query>();
    {
      std::lock_guard lock(mutex);
      char buf[16];
      std::snprintf(buf, sizeof buf, "q%06llu", static_cast<unsigned long long>(next_query++));
      q->id = buf;
    }
    const fs::path uploads = fs::path(dir) / "uploads";
    for (size_t i = 0; i < images.size(); ++i) {
      const std::string image_id = q->id + "_" + std::to_string(i);
      const std::vector<uint8_t> bytes(images[i].content.begin(), images[i].content.end());
      std::optional<BinaryMask> mask;
      std::optional<ImageRaster> raster;
      std::vector<uint8_t> mask_bytes;
      try {
        raster = decode_image(bytes);
        if (!masks.empty()) {
          mask_bytes.assign(masks[i].content.begin(), masks[i].content.end());
          mask = decode_mask(mask_bytes);
        }
      } catch (const Error& e) {
        return send_error(res, 400, "image " + std::to_string(i) + ": " + e.what());
      }
      CaptureImage capture{image_id, std::nullopt, date, rotations[i], std::move(mask), std::nullopt,
                           std::move(*raster)};
      try {
        validate_capture(capture);
      } catch (const Error& e) {
        return send_error(res, 400, "image " + std::to_string(i) + ": " + e.what());
      }
      CaptureRecord record{image_id, std::nullopt, date, rotations[i],
                           "uploads/" + image_id + image_extension(images[i].content), ""};
      if (!mask_bytes.empty()) record.mask_path = "uploads/" + image_id + "_mask.png";
      q->captures.push_back(std::move(capture));
      q->records.push_back(std::move(record));
    }
    try {
      for (size_t i = 0; i < images.size(); ++i) {
        write_file_atomic((fs::path(dir) / q->records[i].image_path).string(), images[i].content);
        if (!q->records[i].mask_path.empty()) {
          write_file_atomic((fs::path(dir) / q->records[i].mask_path).string(), masks[i].content);
        }
      }
    } catch (const Error& e) {
      return send_error(res, 500, e.what());
    }

    json body;
    {
      std::lock_guard lock(mutex);
      queries[q->id] = q;
      pending.push_back(q);
      body = query_view(*q);
    }
    cv.notify_one();
    send_json(res, 201, body);
  }

  void get_candidates(const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.path_params.at("id");
    std::lock_guard lock(mutex);
    auto it = queries.find(id);
    if (it == queries.end()) return send_error(res, 404, "unknown query " + id);
    send_json(res, 200, query_view(*it->second));
  }

  void post_decision(const httplib::Request& req, httplib::Response& res) {
    json body;
    try {
      body = json::parse(req.body);
    } catch (const json::exception&) {
      return send_error(res, 400, "JSON body expected");
    }
    if (!body.is_object() || !body.contains("query_id") || !body["query_id"].is_string() ||
        !body.contains("action") || !body["action"].is_string()) {
      return send_error(res, 400, "query_id and action are required");
    }
    const std::string id = body["query_id"];
    const std::string action_text = body["action"];
    DecisionAction action;
    if (action_text == "accept") {
      action = DecisionAction::kAccept;
    } else if (action_text == "reject_all_new") {
      action = DecisionAction::kRejectAllNew;
    } else if (action_text == "defer") {
      action = DecisionAction::kDefer;
    } else {
      return send_error(res, 400, "action must be accept, reject_all_new or defer");
    }
    std::optional<std::string> identity;
    if (action == DecisionAction::kAccept) {
      if (!body.contains("identity_id") || !body["identity_id"].is_string()) {
        return send_error(res, 400, "accept needs identity_id");
      }
      identity = body["identity_id"].get<std::string>();
    }
    const std::string reviewer =
        body.contains("reviewer") && body["reviewer"].is_string() ? body["reviewer"].get<std::string>() : "";

    std::shared_ptr<Query> q;
    std::vector<NewCapture> captures;
    {
      std::lock_guard lock(mutex);
      auto it = queries.find(id);
      if (it == queries.end()) return send_error(res, 404, "unknown query " + id);
      q = it->second;
      if (q->final || q->busy) return send_error(res, 409, "query " + id + " already decided");
      if (q->status != QueryStatus::kDone) {
        return send_error(res, 409, "query " + id + " is " + to_string(q->status));
      }
      q->busy = true;
      const std::shared_ptr<const Gallery> g = store->snapshot();
      const bool keep_embeddings = g->entries.empty() || g->entries.begin()->second.embedding;
      for (size_t i = 0; i < q->records.size(); ++i) {
        captures.push_back({q->records[i], q->prepared[i].features,
                            keep_embeddings ? q->prepared[i].embedding : nullptr});
      }
    }

    DecisionRecord record;
    int status = 201;
    std::string error;
    try {
      record = action == DecisionAction::kDefer
                   ? store->log_decision(id, action, reviewer, utc_timestamp())
                   : store->append_captures(captures, identity, id, action, reviewer, utc_timestamp());
    } catch (const Error& e) {
      status = http_status(e.code());
      error = e.what();
    } catch (const std::exception& e) {
      status = 500;
      error = e.what();
    }
    {
      std::lock_guard lock(mutex);
      q->busy = false;
      if (status == 201) {
        q->decisions.push_back(record);
        if (action != DecisionAction::kDefer) q->final = true;
      }
    }
    if (status != 201) return send_error(res, status, error);
    send_json(res, 201, decision_json(record));
  }

  void get_image(const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.path_params.at("id");
    std::string path;
    {
      std::lock_guard lock(mutex);
      const auto dash = id.find('_');
      auto it = dash == std::string::npos ? queries.end() : queries.find(id.substr(0, dash));
      if (it != queries.end()) {
        for (const auto& r : it->second->records) {
          if (r.image_id == id) path = resolve_path(dir, r.image_path);
        }
      }
    }
    if (path.empty()) {
      const std::shared_ptr<const Gallery> g = store->snapshot();
      if (const GalleryEntry* e = g->find(id)) path = resolve_path(dir, e->capture.image_path);
    }
    if (path.empty()) return send_error(res, 404, "unknown image " + id);
    std::vector<uint8_t> bytes;
    try {
      bytes = read_file_bytes(path);
    } catch (const Error& e) {
      return send_error(res, 404, e.what());
    }
    res.status = 200;
    res.set_content(std::string(bytes.begin(), bytes.end()), content_type_for(path));
  }

  void get_identities(httplib::Response& res) {
    const std::shared_ptr<const Gallery> g = store->snapshot();
    json out = json::array();
    for (const auto& [identity, images] : g->identities) {
      std::set<CaptureDate> dates;
      for (const auto& [image_id, date] : images) dates.insert(date);
      json d = json::array();
      for (const auto& date : dates) d.push_back(date.iso());
      out.push_back({{"identity_id", identity}, {"n_images", images.size()}, {"dates", d}});
    }
    send_json(res, 200, out);
  }

  void routes() {
    server.set_payload_max_length(config.service.max_upload_bytes);
    const std::string token = config.service.token;
    server.set_pre_routing_handler([token](const httplib::Request& req, httplib::Response& res) {
      if (token.empty() || req.path.rfind("/api/", 0) != 0 ||
          req.path == "/api/health") return httplib::Server::HandlerResponse::Unhandled;
      if (req.get_header_value("X-Reid-Token") == token || req.get_param_value("token") == token) {
        return httplib::Server::HandlerResponse::Unhandled;
      }
      send_error(res, 401, "missing or wrong X-Reid-Token");
      return httplib::Server::HandlerResponse::Handled;
    });
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
      try {
        std::rethrow_exception(ep);
      } catch (const Error& e) {
        send_error(res, http_status(e.code()), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, e.what());
      }
    });

    server.Post("/api/queries", [this](const auto& req, auto& res) { post_query(req, res); });
    server.Get("/api/queries/:id/candidates", [this](const auto& req, auto& res) { get_candidates(req, res); });
    server.Post("/api/decisions", [this](const auto& req, auto& res) { post_decision(req, res); });
    server.Get("/api/report", [this](const auto&, auto& res) {
      res.status = 200;
      res.set_content(store->report(), "text/csv");
    });
    server.Get("/api/identities", [this](const auto&, auto& res) { get_identities(res); });
    server.Get("/api/images/:id", [this](const auto& req, auto& res) { get_image(req, res); });
    server.Get("/api/health", [this](const auto&, auto& res) {
      const auto g = store->snapshot();
      send_json(res, 200, {{"status", "ok"}, {"images", g->size()}, {"identities", g->identities.size()}});
    });
    if (!static_dir.empty() && !server.set_mount_point("/", static_dir)) {
      throw Error(ErrorCode::kNotFound, "static directory not found: " + static_dir);
    }
  }
};

Service::Service(const AppConfig& config, const std::string& gallery_dir, const std::string& static_dir)
    : impl_(std::make_unique<Impl>(config, gallery_dir, static_dir)) {}

Service::~Service() { stop(); }

int Service::bind() {
  const auto& s = impl_->config.service;
  const int port = s.port == 0 ? impl_->server.bind_to_any_port(s.host)
                               : (impl_->server.bind_to_port(s.host, s.port) ? s.port : -1);
  if (port < 0) {
    throw Error(ErrorCode::kIo, "cannot bind " + s.host + ":" + std::to_string(s.port));
  }
  impl_->port = port;
  return port;
}

void Service::run() {
  if (impl_->port < 0) bind();
  impl_->server.listen_after_bind();
}

void Service::start() {
  if (impl_->port < 0) bind();
  impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void Service::wait() {
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

void Service::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

void Service::drain() {
  std::unique_lock lock(impl_->mutex);
  impl_->idle_cv.wait(lock, [&] { return impl_->pending.empty() && impl_->active == 0; });
}

}  // namespace reid
