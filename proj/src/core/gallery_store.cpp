#include "reid/gallery_store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

#include "reid/formats.hpp"
#include "reid/retrieval.hpp"

namespace reid {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kReportHeader = "identity_id,capture_date,n_images,n_captures";
constexpr const char* kMintPrefix = "ID";

std::shared_ptr<const Embedding> load_embedding(Embedding e) {
  double sq = 0;
  for (float v : e.vector) sq += static_cast<double>(v) * v;
  if (std::abs(std::sqrt(sq) - 1.0) <= 1e-6) {
    e.normalized = true;  // keep the stored bits
    return std::make_shared<const Embedding>(std::move(e));
  }
  return std::make_shared<const Embedding>(normalize_embedding(e));
}

void throw_if_invalid(const Gallery& g) {
  const auto violations = validate_gallery(g);
  if (violations.empty()) return;
  const Violation& v = violations.front();
  throw Error(ErrorCode::kFormat, v.rule + ": " + v.entity + " (" + v.detail + ")");
}

ManifestRow to_row(const CaptureRecord& c) {
  return {c.image_path, c.mask_path, c.identity_id.value_or(""), c.capture_date.iso(),
          c.rotation_quarter_turns};
}

std::string read_text_or_empty(const fs::path& p) {
  if (!fs::exists(p)) return {};
  const auto bytes = read_file_bytes(p.string());
  return std::string(bytes.begin(), bytes.end());
}

std::vector<DecisionRecord> read_decisions(const fs::path& p) {
  std::vector<DecisionRecord> out;
  std::istringstream in(read_text_or_empty(p));
  std::string line;
  size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(parse_decision(line));
    } catch (const Error& e) {
      throw Error(ErrorCode::kFormat, std::string(e.what()) + " (" + p.string() + " line " +
                                          std::to_string(n) + ")");
    }
  }
  return out;
}

// Exclusive advisory lock on <dir>/.lock for the lifetime of the object.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) {
    const std::string path = (dir / ".lock").string();
    fd_ = ::open(path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw Error(ErrorCode::kIo, "cannot open lock file " + path);
    if (::flock(fd_, LOCK_EX) != 0) {
      ::close(fd_);
      throw Error(ErrorCode::kIo, "cannot lock " + path);
    }
  }
  ~DirLock() {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace

Gallery ingest(const std::string& manifest_path, const std::string& features_dir,
               const std::string& embeddings_path) {
  const std::vector<ManifestRow> rows = read_manifest(manifest_path);

  std::map<std::string, std::shared_ptr<const Embedding>> embeddings;
  if (!embeddings_path.empty()) {
    for (auto& e : read_embedding_file(embeddings_path)) {
      const std::string id = e.image_id;
      if (embeddings.contains(id)) {
        throw Error(ErrorCode::kConflict, "duplicate embedding for " + id);
      }
      embeddings[id] = load_embedding(std::move(e));
    }
  }

  Gallery g;
  for (size_t i = 0; i < rows.size(); ++i) {
    const ManifestRow& row = rows[i];
    const std::string where = " (manifest row " + std::to_string(i + 1) + ")";
    CaptureRecord c;
    c.image_id = image_id_from_path(row.image_path);
    if (c.image_id.empty()) throw Error(ErrorCode::kFormat, "empty image_id" + where);
    if (g.entries.contains(c.image_id)) {
      throw Error(ErrorCode::kConflict, "duplicate image_id " + c.image_id + where);
    }
    if (row.identity_id.empty()) {
      throw Error(ErrorCode::kFormat, "unlabeled entry " + c.image_id + where);
    }
    c.identity_id = row.identity_id;
    try {
      c.capture_date = CaptureDate::parse(row.capture_date);
    } catch (const Error& e) {
      throw Error(ErrorCode::kFormat, std::string(e.what()) + where);
    }
    c.rotation_quarter_turns = row.rotation_quarter_turns;
    c.image_path = row.image_path;
    c.mask_path = row.mask_path;

    const fs::path feature_path = fs::path(features_dir) / (c.image_id + ".ridf");
    if (!fs::exists(feature_path)) {
      throw Error(ErrorCode::kNotFound, "missing file: " + feature_path.string() + where);
    }
    FeatureSet f;
    try {
      f = read_feature_file(feature_path.string());
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + where);
    }
    if (f.image_id != c.image_id) {
      throw Error(ErrorCode::kFormat,
                  "feature file " + feature_path.string() + " holds " + f.image_id + where);
    }

    GalleryEntry entry;
    entry.features = std::make_shared<const FeatureSet>(std::move(f));
    if (!embeddings_path.empty()) {
      auto it = embeddings.find(c.image_id);
      if (it == embeddings.end()) {
        throw Error(ErrorCode::kNotFound, "missing embedding for " + c.image_id + where);
      }
      entry.embedding = it->second;
    }
    g.identities[*c.identity_id][c.image_id] = c.capture_date;
    entry.capture = std::move(c);
    g.entries.emplace(entry.capture.image_id, std::move(entry));
  }
  throw_if_invalid(g);
  return g;
}

std::string format_report(const Gallery& gallery) {
  std::string out = std::string(kReportHeader) + "\n";
  for (const auto& [identity, images] : gallery.identities) {
    std::map<CaptureDate, size_t> per_date;
    for (const auto& [image_id, date] : images) ++per_date[date];
    for (const auto& [date, n] : per_date) {
      out += csv_escape(identity) + "," + date.iso() + "," + std::to_string(n) + "," +
             std::to_string(per_date.size()) + "\n";
    }
  }
  return out;
}

std::vector<ReportRow> parse_report(const std::string& csv) {
  const auto records = parse_csv(csv);
  if (records.empty()) throw Error(ErrorCode::kFormat, "empty report");
  std::string header;
  for (const auto& f : records.front()) header += (header.empty() ? "" : ",") + f;
  if (header != kReportHeader) throw Error(ErrorCode::kFormat, "bad report header: " + header);
  std::vector<ReportRow> out;
  for (size_t i = 1; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.size() != 4) throw Error(ErrorCode::kFormat, "report row " + std::to_string(i) + ": 4 fields expected");
    try {
      out.push_back({r[0], CaptureDate::parse(r[1]), std::stoul(r[2]), std::stoul(r[3])});
    } catch (const std::logic_error&) {
      throw Error(ErrorCode::kFormat, "report row " + std::to_string(i) + ": bad count");
    }
  }
  return out;
}

std::string format_decision(const DecisionRecord& r) {
  json j;
  j["sequence"] = r.sequence;
  j["query_id"] = r.query_id;
  j["action"] = to_string(r.action);
  j["identity_id"] = r.identity_id ? json(*r.identity_id) : json(nullptr);
  j["new_identity"] = r.new_identity;
  j["image_ids"] = r.image_ids;
  j["reviewer"] = r.reviewer;
  j["timestamp"] = r.timestamp;
  return j.dump();
}

DecisionRecord parse_decision(const std::string& line) {
  try {
    const json j = json::parse(line);
    DecisionRecord r;
    r.sequence = j.at("sequence").get<uint64_t>();
    r.query_id = j.at("query_id").get<std::string>();
    r.action = parse_decision_action(j.at("action").get<std::string>());
    if (!j.at("identity_id").is_null()) r.identity_id = j.at("identity_id").get<std::string>();
    r.new_identity = j.at("new_identity").get<bool>();
    r.image_ids = j.at("image_ids").get<std::vector<std::string>>();
    r.reviewer = j.at("reviewer").get<std::string>();
    r.timestamp = j.at("timestamp").get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("decision record: ") + e.what());
  }
}

std::optional<double> ThresholdTable::get(const std::string& mode, const std::string& name) const {
  auto m = by_mode.find(mode);
  if (m == by_mode.end()) return std::nullopt;
  auto t = m->second.find(name);
  if (t == m->second.end()) return std::nullopt;
  return t->second;
}

GalleryStore::GalleryStore(std::string dir, std::shared_ptr<const Gallery> gallery)
    : dir_(std::move(dir)), gallery_(std::move(gallery)) {}

std::unique_ptr<GalleryStore> GalleryStore::create(const std::string& dir) {
  return save_as(Gallery{}, dir);
}

std::unique_ptr<GalleryStore> GalleryStore::open(const std::string& dir) {
  const fs::path root(dir);
  if (!fs::exists(root / "manifest.csv")) {
    throw Error(ErrorCode::kNotFound, "missing file: " + (root / "manifest.csv").string());
  }
  const fs::path emb = root / "embeddings.ride";
  Gallery g = ingest((root / "manifest.csv").string(), (root / "features").string(),
                     fs::exists(emb) ? emb.string() : std::string());
  g.decision_log = read_decisions(root / "decisions.jsonl");
  throw_if_invalid(g);
  return std::unique_ptr<GalleryStore>(
      new GalleryStore(dir, std::make_shared<const Gallery>(std::move(g))));
}

std::unique_ptr<GalleryStore> GalleryStore::save_as(const Gallery& gallery, const std::string& dir,
                                                    const std::string& source_dir) {
  throw_if_invalid(gallery);
  const fs::path root(dir);
  if (fs::exists(root / "manifest.csv")) {
    throw Error(ErrorCode::kConflict, "gallery already exists at " + dir);
  }
  fs::create_directories(root / "features");

  Gallery copy = gallery;
  if (!source_dir.empty()) {
    const fs::path from = fs::absolute(source_dir);
    const fs::path to = fs::absolute(root);
    auto rebase = [&](std::string& p) {
      if (p.empty() || fs::path(p).is_absolute()) return;
      p = (from / p).lexically_normal().lexically_relative(to).string();
    };
    for (auto& [id, e] : copy.entries) {
      rebase(e.capture.image_path);
      rebase(e.capture.mask_path);
    }
  }
  std::vector<std::string> ids;
  for (const auto& [id, e] : copy.entries) ids.push_back(id);
  auto store = std::unique_ptr<GalleryStore>(new GalleryStore(dir, nullptr));
  store->persist(copy, ids);
  store->gallery_ = std::make_shared<const Gallery>(std::move(copy));
  return store;
}

std::shared_ptr<const Gallery> GalleryStore::snapshot() const {
  std::lock_guard lock(mutex_);
  return gallery_;
}

std::string GalleryStore::mint_identity_id(const Gallery& gallery) {
  int next = 1;
  const std::string prefix = kMintPrefix;
  for (const auto& [identity, images] : gallery.identities) {
    if (identity.size() != prefix.size() + 5 || identity.compare(0, prefix.size(), prefix) != 0) {
      continue;
    }
    const std::string digits = identity.substr(prefix.size());
    if (digits.find_first_not_of("0123456789") != std::string::npos) continue;
    next = std::max(next, std::stoi(digits) + 1);
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s%05d", kMintPrefix, next);
  return buf;
}

DecisionRecord GalleryStore::append_captures(const std::vector<NewCapture>& captures,
                                             const std::optional<std::string>& identity_id,
                                             const std::string& query_id, DecisionAction action,
                                             const std::string& reviewer,
                                             const std::string& timestamp) {
  std::lock_guard lock(mutex_);
  if (captures.empty()) throw Error(ErrorCode::kInvalidArgument, "no captures to append");
  const Gallery& cur = *gallery_;
  Gallery next = cur;

  std::string identity;
  bool fresh = false;
  if (identity_id) {
    if (!cur.identities.contains(*identity_id)) {
      throw Error(ErrorCode::kNotFound, "unknown identity_id " + *identity_id);
    }
    identity = *identity_id;
  } else {
    identity = mint_identity_id(cur);
    fresh = true;
  }

  const bool with_embeddings = !cur.entries.empty() && cur.entries.begin()->second.embedding;
  DecisionRecord rec;
  rec.sequence = cur.decision_log.empty() ? 1 : cur.decision_log.back().sequence + 1;
  rec.query_id = query_id;
  rec.action = action;
  rec.identity_id = identity;
  rec.new_identity = fresh;
  rec.reviewer = reviewer;
  rec.timestamp = timestamp;

  for (const NewCapture& nc : captures) {
    const std::string& id = nc.capture.image_id;
    if (id.empty()) throw Error(ErrorCode::kInvalidArgument, "empty image_id");
    if (next.entries.contains(id)) throw Error(ErrorCode::kConflict, "duplicate image_id " + id);
    if (!nc.features) throw Error(ErrorCode::kInvalidArgument, "features required for " + id);
    if (nc.features->image_id != id) {
      throw Error(ErrorCode::kInvalidArgument, "feature id mismatch for " + id);
    }
    if (!cur.entries.empty() && with_embeddings != static_cast<bool>(nc.embedding)) {
      throw Error(ErrorCode::kInvalidArgument,
                  std::string(with_embeddings ? "embedding required for " : "unexpected embedding for ") + id);
    }
    GalleryEntry e;
    e.capture = nc.capture;
    e.capture.identity_id = identity;
    e.features = nc.features;
    if (nc.embedding) {
      if (nc.embedding->image_id != id) {
        throw Error(ErrorCode::kInvalidArgument, "embedding id mismatch for " + id);
      }
      e.embedding = nc.embedding->normalized ? nc.embedding : load_embedding(*nc.embedding);
    }
    next.identities[identity][id] = e.capture.capture_date;
    next.entries.emplace(id, std::move(e));
    rec.image_ids.push_back(id);
  }
  next.decision_log.push_back(rec);
  throw_if_invalid(next);
  // A mixed batch on an empty gallery leaves some entries without embeddings.
  const size_t with = std::count_if(next.entries.begin(), next.entries.end(),
                                    [](const auto& kv) { return kv.second.embedding != nullptr; });
  if (with != 0 && with != next.entries.size()) {
    throw Error(ErrorCode::kInvalidArgument, "embeddings must cover every capture");
  }

  persist(next, rec.image_ids);
  gallery_ = std::make_shared<const Gallery>(std::move(next));
  return rec;
}

DecisionRecord GalleryStore::append_capture(const NewCapture& capture,
                                            const std::optional<std::string>& identity_id,
                                            const std::string& reviewer,
                                            const std::string& timestamp) {
  return append_captures({capture}, identity_id, "", DecisionAction::kAppend, reviewer, timestamp);
}

DecisionRecord GalleryStore::log_decision(const std::string& query_id, DecisionAction action,
                                          const std::string& reviewer,
                                          const std::string& timestamp) {
  std::lock_guard lock(mutex_);
  Gallery next = *gallery_;
  DecisionRecord rec;
  rec.sequence = next.decision_log.empty() ? 1 : next.decision_log.back().sequence + 1;
  rec.query_id = query_id;
  rec.action = action;
  rec.reviewer = reviewer;
  rec.timestamp = timestamp;
  next.decision_log.push_back(rec);
  persist(next, {});
  gallery_ = std::make_shared<const Gallery>(std::move(next));
  return rec;
}

ThresholdTable GalleryStore::thresholds() const {
  const fs::path p = fs::path(dir_) / "thresholds.json";
  ThresholdTable t;
  const std::string text = read_text_or_empty(p);
  if (text.empty()) return t;
  try {
    t.by_mode = json::parse(text).get<std::map<std::string, std::map<std::string, double>>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kFormat, "thresholds.json: " + std::string(e.what()));
  }
  return t;
}

void GalleryStore::write_thresholds(const ThresholdTable& table) {
  std::lock_guard lock(mutex_);
  DirLock dir_lock(dir_);
  write_file_atomic((fs::path(dir_) / "thresholds.json").string(), json(table.by_mode).dump(2) + "\n");
}

void GalleryStore::persist(const Gallery& next, const std::vector<std::string>& new_feature_ids) {
  const fs::path root(dir_);
  DirLock dir_lock(root);
  std::vector<fs::path> written;
  try {
    for (const auto& id : new_feature_ids) {
      const fs::path p = root / "features" / (id + ".ridf");
      write_feature_file(*next.entries.at(id).features, p.string());
      written.push_back(p);
    }

    std::vector<Embedding> embeddings;
    for (const auto& [id, e] : next.entries) {
      if (e.embedding) embeddings.push_back(*e.embedding);
    }
    if (!embeddings.empty()) {
      write_embedding_file(embeddings, (root / "embeddings.ride").string());
    }

    std::string log;
    for (const auto& r : next.decision_log) log += format_decision(r) + "\n";
    write_file_atomic((root / "decisions.jsonl").string(), log);

    std::vector<ManifestRow> rows;
    for (const auto& [id, e] : next.entries) rows.push_back(to_row(e.capture));
    write_manifest((root / "manifest.csv").string(), rows);
  } catch (...) {
    std::error_code ec;
    for (const auto& p : written) fs::remove(p, ec);
    throw;
  }
}

}  // namespace reid
