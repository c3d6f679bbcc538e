#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "reid/manifest.hpp"
#include "reid/model.hpp"

namespace reid {

// Builds a gallery from a manifest, a directory of <image_id>.ridf feature
// files and an optional embedding file (empty path: none). Embeddings are
// unit-normalized on load. Relative manifest paths are kept as written.
Gallery ingest(const std::string& manifest_path, const std::string& features_dir,
               const std::string& embeddings_path);

// One row per (identity, date): identity_id, capture_date, n_images and
// n_captures (distinct dates of the identity), sorted by identity then date.
std::string format_report(const Gallery& gallery);

struct ReportRow {
  std::string identity_id;
  CaptureDate capture_date;
  size_t n_images = 0;
  size_t n_captures = 0;
};
std::vector<ReportRow> parse_report(const std::string& csv);

std::string format_decision(const DecisionRecord& record);  // one JSON object
DecisionRecord parse_decision(const std::string& json_line);

struct NewCapture {
  CaptureRecord capture;  // identity_id is ignored
  std::shared_ptr<const FeatureSet> features;
  std::shared_ptr<const Embedding> embedding;
};

// Calibrated open-set thresholds keyed by similarity mode name.
struct ThresholdTable {
  std::map<std::string, std::map<std::string, double>> by_mode;  // mode -> name -> tau

  std::optional<double> get(const std::string& mode, const std::string& name) const;
};

// Directory-backed gallery:
//   manifest.csv, features/<image_id>.ridf, embeddings.ride,
//   decisions.jsonl, thresholds.json, .lock
// Mutations validate in memory first, take the lock file, write temp files
// and rename them, manifest last. Readers take immutable snapshots.
class GalleryStore {
 public:
  static std::unique_ptr<GalleryStore> create(const std::string& dir);
  static std::unique_ptr<GalleryStore> open(const std::string& dir);
  // Writes an in-memory gallery (features, embeddings, manifest, log) to a
  // directory without a manifest. Relative image paths resolved against
  // source_dir are rewritten relative to dir.
  static std::unique_ptr<GalleryStore> save_as(const Gallery& gallery, const std::string& dir,
                                               const std::string& source_dir = {});

  const std::string& dir() const noexcept { return dir_; }
  std::shared_ptr<const Gallery> snapshot() const;

  // Appends captures under identity_id, or under a freshly minted identity
  // when identity_id is empty; one decision record covers the batch.
  DecisionRecord append_captures(const std::vector<NewCapture>& captures,
                                 const std::optional<std::string>& identity_id,
                                 const std::string& query_id, DecisionAction action,
                                 const std::string& reviewer, const std::string& timestamp);

  DecisionRecord append_capture(const NewCapture& capture,
                                const std::optional<std::string>& identity_id,
                                const std::string& reviewer = {},
                                const std::string& timestamp = {});

  // A decision without gallery change (defer).
  DecisionRecord log_decision(const std::string& query_id, DecisionAction action,
                              const std::string& reviewer, const std::string& timestamp);

  ThresholdTable thresholds() const;
  void write_thresholds(const ThresholdTable& table);

  std::string report() const { return format_report(*snapshot()); }

  // Deterministic fresh identity id for the given gallery.
  static std::string mint_identity_id(const Gallery& gallery);

 private:
  explicit GalleryStore(std::string dir, std::shared_ptr<const Gallery> gallery);
  void persist(const Gallery& next, const std::vector<std::string>& new_feature_ids);

  std::string dir_;
  mutable std::mutex mutex_;
  std::shared_ptr<const Gallery> gallery_;
};

}  // namespace reid
