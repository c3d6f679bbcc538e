#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "reid/local_features.hpp"
#include "reid/matcher.hpp"
#include "reid/model.hpp"
#include "reid/retrieval.hpp"

namespace reid {

struct PipelineConfig {
  size_t k = 100;
  MatchConfig match;
  double open_set_threshold = 0;  // tau
  bool stage2_enabled = true;
  uint64_t root_seed = 0;

  void validate() const;
};

struct QueryImage {
  std::string image_id;
  std::optional<CaptureDate> capture_date;
  std::shared_ptr<const FeatureSet> features;
  std::shared_ptr<const Embedding> embedding;
};

// Orientation and background masking ahead of keypoint detection.
FeatureSet extract_local_features(const CaptureImage& capture, const DetectorConfig& config);

QueryImage prepare_query(const CaptureImage& capture, const DetectorConfig& detector,
                         const ThumbnailConfig& thumbnail);

QueryImage query_from_entry(const GalleryEntry& entry);

// Read-only view of a gallery in ascending image_id order. The gallery
// must outlive the index.
class GalleryIndex {
 public:
  explicit GalleryIndex(const Gallery& gallery);

  size_t size() const noexcept { return entries_.size(); }
  const GalleryEntry& entry(size_t row) const noexcept { return *entries_[row]; }
  std::span<const std::string> image_ids() const noexcept { return ids_; }
  // Throws when some entry lacks an embedding.
  const EmbeddingMatrix& embeddings() const;

 private:
  std::vector<const GalleryEntry*> entries_;
  std::vector<std::string> ids_;
  std::optional<EmbeddingMatrix> embeddings_;
  std::string missing_embedding_;
};

// Returns true when the gallery entry must not be considered for the query.
using CandidateFilter = std::function<bool(const QueryImage&, const GalleryEntry&)>;

// Excludes gallery images captured on the query's date.
CandidateFilter exclude_same_date();

RankedCandidates identify_two_stage(std::span<const QueryImage> queries, const GalleryIndex& gallery,
                                    const PipelineConfig& config,
                                    const CandidateFilter& exclude = {});

// Every admissible gallery image is matched; stage 1 is skipped.
RankedCandidates identify_local(std::span<const QueryImage> queries, const GalleryIndex& gallery,
                                const PipelineConfig& config, const CandidateFilter& exclude = {});

// Match iff best exists and best->score >= tau.
Decision open_set_decide(const PooledCandidate* best, double tau);

}  // namespace reid
