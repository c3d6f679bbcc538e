#include "reid/pipeline.hpp"

#include <algorithm>
#include <limits>

#include "reid/preprocess.hpp"
#include "reid/util.hpp"

namespace reid {

void PipelineConfig::validate() const {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (!(open_set_threshold >= 0)) {
    throw Error(ErrorCode::kInvalidArgument, "open_set_threshold must be >= 0");
  }
  match.validate();
}

FeatureSet extract_local_features(const CaptureImage& capture, const DetectorConfig& config) {
  validate_capture(capture);
  const CaptureImage oriented = orient_capture(capture);
  const ImageRaster gray = to_grayscale(oriented.raster);
  const ImageRaster input = oriented.mask ? apply_mask(gray, *oriented.mask, 0.0f) : gray;
  return detect_and_describe(input, config, capture.image_id);
}

QueryImage prepare_query(const CaptureImage& capture, const DetectorConfig& detector,
                         const ThumbnailConfig& thumbnail) {
  QueryImage q;
  q.image_id = capture.image_id;
  q.capture_date = capture.capture_date;
  q.features = std::make_shared<const FeatureSet>(extract_local_features(capture, detector));
  q.embedding = std::make_shared<const Embedding>(thumbnail_embedding(capture, thumbnail));
  return q;
}

QueryImage query_from_entry(const GalleryEntry& entry) {
  return QueryImage{entry.capture.image_id, entry.capture.capture_date, entry.features,
                    entry.embedding};
}

GalleryIndex::GalleryIndex(const Gallery& gallery) {
  std::vector<const Embedding*> embeddings;
  for (const auto& [id, entry] : gallery.entries) {
    entries_.push_back(&entry);
    ids_.push_back(id);
    if (entry.embedding) {
      embeddings.push_back(entry.embedding.get());
    } else if (missing_embedding_.empty()) {
      missing_embedding_ = id;
    }
  }
  if (missing_embedding_.empty()) {
    embeddings_ = EmbeddingMatrix::from(std::span<const Embedding* const>(embeddings));
  }
}

const EmbeddingMatrix& GalleryIndex::embeddings() const {
  if (!embeddings_) {
    throw Error(ErrorCode::kInvalidArgument, "embeddings unavailable for " + missing_embedding_);
  }
  return *embeddings_;
}

CandidateFilter exclude_same_date() {
  return [](const QueryImage& q, const GalleryEntry& e) {
    return q.capture_date && *q.capture_date == e.capture.capture_date;
  };
}

Decision open_set_decide(const PooledCandidate* best, double tau) {
  Decision d;
  if (!best) return d;
  d.score = best->score;
  if (best->score >= tau) {
    d.kind = Decision::Kind::kMatch;
    d.identity_id = best->identity_id;
    d.image_id = best->image_id;
  }
  return d;
}

namespace {

bool ranks_before(const PooledCandidate& a, const PooledCandidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.image_id < b.image_id;
}

RankedCandidates identify(std::span<const QueryImage> queries, const GalleryIndex& gallery,
                          const PipelineConfig& cfg, const CandidateFilter& exclude,
                          bool use_stage1) {
  cfg.validate();
  if (queries.empty()) throw Error(ErrorCode::kInvalidArgument, "no query images");
  const size_t nq = queries.size(), ng = gallery.size();
  RankedCandidates out;
  out.threshold_used = cfg.open_set_threshold;
  out.stage1.resize(nq);
  for (const auto& q : queries) out.query_image_ids.push_back(q.image_id);
  if (ng == 0) return out;

  // admissible[q * ng + row]
  std::vector<char> admissible(nq * ng, 1);
  if (exclude) {
    for (size_t q = 0; q < nq; ++q) {
      for (size_t r = 0; r < ng; ++r) admissible[q * ng + r] = !exclude(queries[q], gallery.entry(r));
    }
  }

  // Rows to score per query, plus the best cosine per gallery row.
  std::vector<std::vector<uint32_t>> rows(nq);
  std::vector<std::optional<double>> best_cosine(ng);
  if (use_stage1) {
    const EmbeddingMatrix& emb = gallery.embeddings();
    for (size_t q = 0; q < nq; ++q) {
      if (!queries[q].embedding) {
        throw Error(ErrorCode::kInvalidArgument,
                    "embedding unavailable for query " + queries[q].image_id);
      }
      const std::vector<double> sim = cosine_row(queries[q].embedding->vector, emb);
      const char* adm = admissible.data() + q * ng;
      for (size_t r = 0; r < ng; ++r) {
        if (adm[r] && (!best_cosine[r] || sim[r] > *best_cosine[r])) best_cosine[r] = sim[r];
      }
      out.stage1[q] = topk_shortlist(sim, gallery.image_ids(), cfg.k,
                                     [adm](size_t r) { return !adm[r]; });
      for (const auto& s : out.stage1[q]) {
        const auto ids = gallery.image_ids();
        rows[q].push_back(static_cast<uint32_t>(
            std::lower_bound(ids.begin(), ids.end(), s.image_id) - ids.begin()));
      }
    }
  } else {
    for (size_t q = 0; q < nq; ++q) {
      for (size_t r = 0; r < ng; ++r) {
        if (admissible[q * ng + r]) rows[q].push_back(static_cast<uint32_t>(r));
      }
    }
  }

  struct Pair {
    uint32_t query;
    uint32_t row;
    double score;
  };
  std::vector<Pair> pairs;
  for (size_t q = 0; q < nq; ++q) {
    for (uint32_t r : rows[q]) pairs.push_back({static_cast<uint32_t>(q), r, 0.0});
  }

  const bool local = !use_stage1 || cfg.stage2_enabled;
  if (local) {
    for (const auto& q : queries) {
      if (!q.features) throw Error(ErrorCode::kInvalidArgument, "features unavailable for query " + q.image_id);
    }
    for (const auto& p : pairs) {
      if (!gallery.entry(p.row).features) {
        throw Error(ErrorCode::kInvalidArgument,
                    "features unavailable for " + gallery.image_ids()[p.row]);
      }
    }
    parallel_for(pairs.size(), [&](size_t i) {
      Pair& p = pairs[i];
      const QueryImage& q = queries[p.query];
      const GalleryEntry& g = gallery.entry(p.row);
      const uint64_t seed = pair_seed(cfg.root_seed, q.image_id, g.capture.image_id);
      p.score = match_pair(*q.features, *g.features, cfg.match, seed).similarity;
    });
  } else {
    for (auto& p : pairs) p.score = *best_cosine[p.row];
  }

  // Max-pool over queries.
  std::vector<std::optional<double>> pooled(ng);
  for (const auto& p : pairs) {
    if (!pooled[p.row] || p.score > *pooled[p.row]) pooled[p.row] = p.score;
  }
  for (size_t r = 0; r < ng; ++r) {
    if (!pooled[r]) continue;
    const GalleryEntry& g = gallery.entry(r);
    out.stage2.push_back({g.capture.image_id, g.capture.identity_id.value_or(""), *pooled[r], true,
                          best_cosine[r]});
  }
  std::sort(out.stage2.begin(), out.stage2.end(), ranks_before);

  if (use_stage1) {
    std::vector<PooledCandidate> tail;
    for (size_t r = 0; r < ng; ++r) {
      if (pooled[r] || !best_cosine[r]) continue;
      const GalleryEntry& g = gallery.entry(r);
      tail.push_back({g.capture.image_id, g.capture.identity_id.value_or(""), 0.0, false,
                      best_cosine[r]});
    }
    std::sort(tail.begin(), tail.end(), [](const PooledCandidate& a, const PooledCandidate& b) {
      if (*a.stage1_score != *b.stage1_score) return *a.stage1_score > *b.stage1_score;
      return a.image_id < b.image_id;
    });
    out.stage2.insert(out.stage2.end(), tail.begin(), tail.end());
  }

  const PooledCandidate* best = out.stage2.empty() || !out.stage2.front().scored
                                    ? nullptr
                                    : &out.stage2.front();
  out.decision = open_set_decide(best, cfg.open_set_threshold);
  return out;
}

}  // namespace

RankedCandidates identify_two_stage(std::span<const QueryImage> queries, const GalleryIndex& gallery,
                                    const PipelineConfig& config, const CandidateFilter& exclude) {
  return identify(queries, gallery, config, exclude, true);
}

RankedCandidates identify_local(std::span<const QueryImage> queries, const GalleryIndex& gallery,
                                const PipelineConfig& config, const CandidateFilter& exclude) {
  return identify(queries, gallery, config, exclude, false);
}

}  // namespace reid
