#include "reid/reid.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <set>
#include <sstream>

#include "json.hpp"
#include "reid/config.hpp"
#include "reid/corpus.hpp"
#include "reid/eval.hpp"
#include "reid/formats.hpp"
#include "reid/gallery_store.hpp"
#include "reid/image_io.hpp"
#include "reid/manifest.hpp"
#include "reid/pipeline.hpp"
#include "reid/service.hpp"
#include "reid/synthgen.hpp"
#include "reid/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

struct reid_context {
  reid::AppConfig config;
};

struct reid_gallery {
  std::unique_ptr<reid::GalleryStore> store;
};

struct reid_ranking {
  reid::RankedCandidates result;
};

struct reid_server {
  std::unique_ptr<reid::Service> service;
  int port = -1;
};

namespace {

thread_local std::string g_last_error;

template <typename F>
reid_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return REID_OK;
  } catch (const reid::Error& e) {
    g_last_error = e.what();
    return static_cast<reid_status>(static_cast<int>(e.code()));
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return REID_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return REID_INTERNAL;
}

void require(bool ok, const char* what) {
  if (!ok) throw reid::Error(reid::ErrorCode::kInvalidArgument, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

std::string opt(const char* s) { return s ? std::string(s) : std::string(); }

std::string read_text(const std::string& path) {
  const auto bytes = reid::read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

reid::CaptureImage load_query(const reid_query_image& q) {
  require(q.image_path != nullptr, "image_path is required");
  reid::CaptureRecord r;
  r.image_id = reid::image_id_from_path(q.image_path);
  r.image_path = q.image_path;
  r.mask_path = opt(q.mask_path);
  r.rotation_quarter_turns = q.rotation_quarter_turns;
  if (q.capture_date) r.capture_date = reid::CaptureDate::parse(q.capture_date);
  return reid::load_capture(r, "");
}

// span<const bool> cannot view a std::vector<bool>.
std::unique_ptr<bool[]> bool_array(const std::vector<bool>& v) {
  auto out = std::make_unique<bool[]>(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = v[i];
  return out;
}

std::string model_name(const reid::AppConfig& cfg, bool exhaustive) {
  const auto& p = cfg.pipeline;
  if (exhaustive) return reid::to_string(p.match.similarity_mode) + ":exhaustive";
  if (!p.stage2_enabled) return "thumbnail_cosine:k" + std::to_string(p.k);
  return reid::to_string(p.match.similarity_mode) + ":two_stage_k" + std::to_string(p.k);
}

json outcome_json(const reid::RankedCandidates& r) {
  json candidates = json::array();
  for (const auto& c : r.stage2) {
    candidates.push_back({{"image_id", c.image_id},
                          {"identity_id", c.identity_id},
                          {"score", c.score},
                          {"scored", c.scored}});
  }
  const reid::Decision& d = r.decision;
  return {{"query_image_ids", r.query_image_ids},
          {"threshold", r.threshold_used},
          {"decision",
           {{"kind", d.is_match() ? "Match" : "NewIndividual"},
            {"identity_id", d.identity_id ? json(*d.identity_id) : json(nullptr)},
            {"image_id", d.image_id ? json(*d.image_id) : json(nullptr)},
            {"score", d.score}}},
          {"candidates", candidates}};
}

}  // namespace

extern "C" {

const char* reid_last_error(void) { return g_last_error.c_str(); }

const char* reid_status_name(reid_status status) {
  switch (status) {
    case REID_OK: return "ok";
    case REID_INVALID_ARGUMENT: return "invalid argument";
    case REID_FORMAT: return "format error";
    case REID_TRUNCATED: return "truncated";
    case REID_IO: return "i/o error";
    case REID_NOT_FOUND: return "not found";
    case REID_CONFLICT: return "conflict";
    case REID_UNDERDETERMINED: return "underdetermined";
    case REID_DEGENERATE_GEOMETRY: return "degenerate geometry";
    case REID_INFEASIBLE: return "infeasible";
    case REID_DOMAIN: return "domain error";
    case REID_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* reid_version(void) { return "0.1.0"; }

void reid_free(void* p) { std::free(p); }

void reid_set_threads(unsigned threads) { reid::set_thread_count(threads); }

reid_status reid_context_create(const char* config_path, reid_context** out) {
  return guarded([&] {
    require(out != nullptr, "out is NULL");
    auto ctx = std::make_unique<reid_context>();
    if (config_path) ctx->config = reid::load_config(config_path);
    *out = ctx.release();
  });
}

void reid_context_destroy(reid_context* ctx) { delete ctx; }

reid_status reid_context_set(reid_context* ctx, const char* key, const char* value) {
  return guarded([&] {
    require(ctx && key && value, "context, key and value are required");
    reid::AppConfig next = ctx->config;
    next.set(key, value);
    next.validate();
    ctx->config = std::move(next);
  });
}

reid_status reid_context_set_seed(reid_context* ctx, uint64_t seed) {
  return guarded([&] {
    require(ctx != nullptr, "context is NULL");
    ctx->config.pipeline.root_seed = seed;
    ctx->config.synth.base_seed = seed;
  });
}

reid_status reid_context_dump(const reid_context* ctx, char** out_text) {
  return guarded([&] {
    require(ctx && out_text, "context and out_text are required");
    *out_text = dup_string(reid::format_config(ctx->config));
  });
}

reid_status reid_extract(const reid_context* ctx, const char* image_path, const char* mask_path,
                         int rotation_quarter_turns, const char* image_id,
                         const char* out_feature_path) {
  return guarded([&] {
    require(ctx && image_path && out_feature_path, "context, image_path and output are required");
    reid_query_image q{image_path, mask_path, nullptr, rotation_quarter_turns};
    reid::CaptureImage capture = load_query(q);
    if (image_id) capture.image_id = image_id;
    const reid::FeatureSet f = reid::extract_local_features(capture, ctx->config.detector);
    reid::write_feature_file(f, out_feature_path);
  });
}

reid_status reid_extract_manifest(const reid_context* ctx, const char* manifest_path,
                                  const char* features_dir, const char* embeddings_path,
                                  size_t* out_count) {
  return guarded([&] {
    require(ctx && manifest_path && features_dir, "context, manifest and features_dir are required");
    const reid::Gallery g =
        reid::extract_corpus(manifest_path, ctx->config.detector, ctx->config.embedding);
    reid::write_corpus_features(g, features_dir, opt(embeddings_path));
    if (out_count) *out_count = g.size();
  });
}

reid_status reid_import_features(const char* feature_path, const char* out_dir, char** out_image_id) {
  return guarded([&] {
    require(feature_path && out_dir, "feature_path and out_dir are required");
    const reid::FeatureSet f = reid::read_feature_file(feature_path);
    reid::validate_features(f);
    if (f.image_id.empty() || f.image_id.find('/') != std::string::npos) {
      throw reid::Error(reid::ErrorCode::kFormat, "unusable image_id '" + f.image_id + "'");
    }
    reid::write_feature_file(f, (fs::path(out_dir) / (f.image_id + ".ridf")).string());
    if (out_image_id) *out_image_id = dup_string(f.image_id);
  });
}

reid_status reid_import_embeddings(const char* embeddings_path, const char* out_path,
                                   size_t* out_count) {
  return guarded([&] {
    require(embeddings_path && out_path, "input and output paths are required");
    const auto in = reid::read_embedding_file(embeddings_path);
    std::set<std::string> seen;
    std::vector<reid::Embedding> out;
    for (const auto& e : in) {
      if (!seen.insert(e.image_id).second) {
        throw reid::Error(reid::ErrorCode::kConflict, "duplicate embedding for " + e.image_id);
      }
      if (e.vector.size() != in.front().vector.size()) {
        throw reid::Error(reid::ErrorCode::kFormat, "embedding dimension not uniform at " + e.image_id);
      }
      out.push_back(reid::normalize_embedding(e));
    }
    reid::write_embedding_file(out, out_path);
    if (out_count) *out_count = out.size();
  });
}

reid_status reid_match_files(const reid_context* ctx, const char* features_a, const char* features_b,
                             const char* out_match_path, uint32_t* out_similarity) {
  return guarded([&] {
    require(ctx && features_a && features_b, "context and both feature files are required");
    const reid::FeatureSet a = reid::read_feature_file(features_a);
    const reid::FeatureSet b = reid::read_feature_file(features_b);
    const uint64_t seed = reid::pair_seed(ctx->config.pipeline.root_seed, a.image_id, b.image_id);
    const reid::MatchResult m = reid::match_pair(a, b, ctx->config.pipeline.match, seed);
    if (out_match_path) reid::write_match_file(m, out_match_path);
    if (out_similarity) *out_similarity = m.similarity;
  });
}

reid_status reid_import_matches(const char* match_path, uint32_t* out_similarity) {
  return guarded([&] {
    require(match_path && out_similarity, "match_path and out_similarity are required");
    *out_similarity = reid::import_matches(match_path).similarity;
  });
}

reid_status reid_gallery_ingest(const char* manifest_path, const char* features_dir,
                                const char* embeddings_path, const char* gallery_dir,
                                size_t* out_count) {
  return guarded([&] {
    require(manifest_path && features_dir && gallery_dir, "manifest, features_dir and gallery_dir are required");
    const reid::Gallery g = reid::ingest(manifest_path, features_dir, opt(embeddings_path));
    reid::GalleryStore::save_as(g, gallery_dir, fs::path(manifest_path).parent_path().string());
    if (out_count) *out_count = g.size();
  });
}

reid_status reid_gallery_open(const char* gallery_dir, reid_gallery** out) {
  return guarded([&] {
    require(gallery_dir && out, "gallery_dir and out are required");
    auto g = std::make_unique<reid_gallery>();
    g->store = reid::GalleryStore::open(gallery_dir);
    *out = g.release();
  });
}

void reid_gallery_close(reid_gallery* gallery) { delete gallery; }

reid_status reid_gallery_counts(const reid_gallery* gallery, size_t* out_images,
                                size_t* out_identities, size_t* out_decisions) {
  return guarded([&] {
    require(gallery != nullptr, "gallery is NULL");
    const auto g = gallery->store->snapshot();
    if (out_images) *out_images = g->size();
    if (out_identities) *out_identities = g->identities.size();
    if (out_decisions) *out_decisions = g->decision_log.size();
  });
}

reid_status reid_gallery_report(const reid_gallery* gallery, char** out_csv) {
  return guarded([&] {
    require(gallery && out_csv, "gallery and out_csv are required");
    *out_csv = dup_string(gallery->store->report());
  });
}

reid_status reid_gallery_set_threshold(reid_gallery* gallery, const char* mode, const char* name,
                                       double threshold) {
  return guarded([&] {
    require(gallery && mode && name, "gallery, mode and name are required");
    reid::parse_similarity_mode(mode);
    require(threshold >= 0, "threshold must be >= 0");
    reid::ThresholdTable t = gallery->store->thresholds();
    t.by_mode[mode][name] = threshold;
    gallery->store->write_thresholds(t);
  });
}

reid_status reid_identify(const reid_context* ctx, const reid_gallery* gallery,
                          const reid_query_image* images, size_t n_images, int exhaustive,
                          int exclude_same_date, reid_ranking** out) {
  return guarded([&] {
    require(ctx && gallery && out, "context, gallery and out are required");
    require(images != nullptr || n_images == 0, "images is NULL");
    std::vector<reid::QueryImage> queries;
    for (size_t i = 0; i < n_images; ++i) {
      const reid::CaptureImage c = load_query(images[i]);
      reid::QueryImage q = reid::prepare_query(c, ctx->config.detector, ctx->config.embedding);
      if (!images[i].capture_date) q.capture_date.reset();
      queries.push_back(std::move(q));
    }
    const auto snapshot = gallery->store->snapshot();
    const reid::GalleryIndex index(*snapshot);
    const reid::CandidateFilter filter = exclude_same_date ? reid::exclude_same_date() : reid::CandidateFilter{};
    auto r = std::make_unique<reid_ranking>();
    r->result = exhaustive ? reid::identify_local(queries, index, ctx->config.pipeline, filter)
                           : reid::identify_two_stage(queries, index, ctx->config.pipeline, filter);
    *out = r.release();
  });
}

void reid_ranking_destroy(reid_ranking* ranking) { delete ranking; }

size_t reid_ranking_size(const reid_ranking* ranking) {
  return ranking ? ranking->result.stage2.size() : 0;
}

reid_status reid_ranking_candidate(const reid_ranking* ranking, size_t index, reid_candidate* out) {
  return guarded([&] {
    require(ranking && out, "ranking and out are required");
    if (index >= ranking->result.stage2.size()) {
      throw reid::Error(reid::ErrorCode::kInvalidArgument, "candidate index out of range");
    }
    const auto& c = ranking->result.stage2[index];
    out->image_id = c.image_id.c_str();
    out->identity_id = c.identity_id.c_str();
    out->score = c.score;
    out->scored = c.scored ? 1 : 0;
    out->has_stage1_score = c.stage1_score ? 1 : 0;
    out->stage1_score = c.stage1_score.value_or(0.0);
  });
}

reid_status reid_ranking_decision(const reid_ranking* ranking, int* out_is_match,
                                  const char** out_identity_id, double* out_score,
                                  double* out_threshold) {
  return guarded([&] {
    require(ranking != nullptr, "ranking is NULL");
    const auto& d = ranking->result.decision;
    if (out_is_match) *out_is_match = d.is_match() ? 1 : 0;
    if (out_identity_id) *out_identity_id = d.identity_id ? d.identity_id->c_str() : nullptr;
    if (out_score) *out_score = d.score;
    if (out_threshold) *out_threshold = ranking->result.threshold_used;
  });
}

reid_status reid_ranking_json(const reid_ranking* ranking, char** out_json) {
  return guarded([&] {
    require(ranking && out_json, "ranking and out_json are required");
    *out_json = dup_string(outcome_json(ranking->result).dump(2) + "\n");
  });
}

reid_status reid_ranking_stage1_json(const reid_ranking* ranking, char** out_json) {
  return guarded([&] {
    require(ranking && out_json, "ranking and out_json are required");
    const auto& r = ranking->result;
    json out = json::array();
    for (size_t i = 0; i < r.stage1.size(); ++i) {
      json list = json::array();
      for (const auto& s : r.stage1[i]) list.push_back({{"image_id", s.image_id}, {"score", s.score}});
      out.push_back({{"query_image_id", r.query_image_ids[i]}, {"shortlist", list}});
    }
    *out_json = dup_string(out.dump(2) + "\n");
  });
}

reid_status reid_evaluate(const reid_context* ctx, const char* corpus_dir, const char* out_dir,
                          int exhaustive, int two_stage, char** out_summary) {
  return guarded([&] {
    require(ctx && corpus_dir && out_dir, "context, corpus_dir and out_dir are required");
    require(exhaustive || two_stage, "nothing to evaluate: enable exhaustive or two-stage");
    const reid::AppConfig& cfg = ctx->config;
    const reid::Gallery g = reid::load_corpus(corpus_dir, cfg.detector, cfg.embedding);
    const reid::ProtocolInstance protocol = reid::build_protocol(g);
    const reid::GalleryIndex index(g);
    fs::create_directories(out_dir);
    const fs::path out(out_dir);

    std::vector<reid::TopkRow> table;
    std::ostringstream runtime, summary;
    runtime << "model,runtime_s,n_queries\n";
    auto record = [&](const reid::ProtocolRun& run, const std::string& model) {
      const auto rows = reid::topk_table(run, model, cfg.eval.k_list);
      table.insert(table.end(), rows.begin(), rows.end());
      runtime << reid::csv_escape(model) << ',' << run.seconds << ',' << run.outcomes.size() << '\n';
      summary << model << ": " << run.outcomes.size() << " queries, " << run.seconds << " s\n";
      for (const auto& r : rows) {
        summary << "  top-" << r.k << ' ' << reid::to_string(r.level) << ' ' << r.accuracy << '\n';
      }
    };
    if (exhaustive) {
      const reid::ProtocolRun run = reid::run_protocol(protocol, index, cfg.pipeline, true);
      record(run, model_name(cfg, true));
      const reid::PairScores pairs = reid::collect_pair_scores(protocol, run);
      reid::write_file_atomic((out / "pairs.csv").string(), reid::format_pairs_csv(pairs));
      const auto same = bool_array(pairs.same_identity);
      const std::span<const bool> labels(same.get(), pairs.same_identity.size());
      reid::write_file_atomic(
          (out / "histogram.csv").string(),
          reid::format_histogram_csv(
              reid::score_histograms(pairs.score, labels, cfg.eval.histogram_bin_width)));
      reid::write_file_atomic((out / "pr.csv").string(),
                              reid::format_pr_csv(reid::pr_curve(pairs.score, labels)));
    }
    if (two_stage) {
      const reid::ProtocolRun run = reid::run_protocol(protocol, index, cfg.pipeline, false);
      record(run, model_name(cfg, false));
    }
    reid::write_file_atomic((out / "topk.csv").string(), reid::format_topk_csv(table));
    reid::write_file_atomic((out / "runtime.csv").string(), runtime.str());
    if (out_summary) *out_summary = dup_string(summary.str());
  });
}

reid_status reid_keypoint_sweep(const reid_context* ctx, const char* corpus_dir, const char* out_csv,
                                int exhaustive) {
  return guarded([&] {
    require(ctx && corpus_dir && out_csv, "context, corpus_dir and out_csv are required");
    const reid::AppConfig& cfg = ctx->config;
    const reid::Gallery g = reid::load_corpus(corpus_dir, cfg.detector, cfg.embedding);
    const reid::ProtocolInstance protocol = reid::build_protocol(g);
    const auto rows =
        reid::keypoint_budget_sweep(g, protocol, cfg.pipeline, cfg.eval.keypoint_budgets, exhaustive != 0);
    reid::write_file_atomic(out_csv, reid::format_budget_csv(rows));
  });
}

reid_status reid_calibrate(const char* pairs_csv, reid_target_metric metric, double target,
                           const char* out_pr_csv, double* out_threshold, double* out_precision,
                           double* out_recall) {
  return guarded([&] {
    require(pairs_csv != nullptr, "pairs_csv is required");
    require(metric == REID_TARGET_RECALL || metric == REID_TARGET_PRECISION, "unknown target metric");
    require(target > 0 && target <= 1, "target must be in (0, 1]");
    const auto records = reid::parse_csv(read_text(pairs_csv));
    if (records.empty() || records.front() != std::vector<std::string>{"image_a", "image_b", "score", "same_identity"}) {
      throw reid::Error(reid::ErrorCode::kFormat, "pairs file needs image_a,image_b,score,same_identity");
    }
    std::vector<double> scores;
    std::vector<bool> positive;
    for (size_t i = 1; i < records.size(); ++i) {
      const auto& r = records[i];
      if (r.size() != 4 || (r[3] != "0" && r[3] != "1")) {
        throw reid::Error(reid::ErrorCode::kFormat, "pairs row " + std::to_string(i) + " malformed");
      }
      try {
        scores.push_back(std::stod(r[2]));
      } catch (const std::logic_error&) {
        throw reid::Error(reid::ErrorCode::kFormat, "pairs row " + std::to_string(i) + ": bad score");
      }
      positive.push_back(r[3] == "1");
    }
    const auto labels = bool_array(positive);
    const reid::PRCurve curve =
        reid::pr_curve(scores, std::span<const bool>(labels.get(), positive.size()));
    if (out_pr_csv) reid::write_file_atomic(out_pr_csv, reid::format_pr_csv(curve));
    reid::CalibrationTarget t;
    t.metric = metric == REID_TARGET_RECALL ? reid::CalibrationTarget::Metric::kRecall
                                            : reid::CalibrationTarget::Metric::kPrecision;
    t.value = target;
    const reid::Calibration c = reid::calibrate_threshold(curve, t);
    if (out_threshold) *out_threshold = c.threshold;
    if (out_precision) *out_precision = c.precision;
    if (out_recall) *out_recall = c.recall;
  });
}

reid_status reid_split(const reid_context* ctx, const char* manifest_path, const char* out_csv,
                       size_t* out_validation) {
  return guarded([&] {
    require(ctx && manifest_path && out_csv, "context, manifest and out_csv are required");
    std::map<std::string, std::set<std::string>> dates;
    for (const auto& row : reid::read_manifest(manifest_path)) {
      if (!row.identity_id.empty()) dates[row.identity_id].insert(row.capture_date);
    }
    std::map<std::string, int> counts;
    for (const auto& [id, d] : dates) counts[id] = static_cast<int>(d.size());
    const reid::IdentitySplit split =
        reid::split_identities(counts, ctx->config.eval.split_fraction, ctx->config.pipeline.root_seed);
    const std::set<std::string> validation(split.validation.begin(), split.validation.end());
    std::string text = "identity_id,n_dates,split\n";
    for (const auto& [id, n] : counts) {
      text += reid::csv_escape(id) + "," + std::to_string(n) + "," +
              (validation.contains(id) ? "validation" : "train") + "\n";
    }
    reid::write_file_atomic(out_csv, text);
    if (out_validation) *out_validation = validation.size();
  });
}

reid_status reid_synth(const reid_context* ctx, const char* out_dir, size_t* out_images) {
  return guarded([&] {
    require(ctx && out_dir, "context and out_dir are required");
    const auto rows = reid::generate_dataset(ctx->config.synth, out_dir);
    if (out_images) *out_images = rows.size();
  });
}

reid_status reid_server_start(const reid_context* ctx, const char* gallery_dir, const char* static_dir,
                              reid_server** out) {
  return guarded([&] {
    require(ctx && gallery_dir && out, "context, gallery_dir and out are required");
    auto s = std::make_unique<reid_server>();
    s->service = std::make_unique<reid::Service>(ctx->config, gallery_dir, opt(static_dir));
    s->port = s->service->bind();
    s->service->start();
    *out = s.release();
  });
}

int reid_server_port(const reid_server* server) { return server ? server->port : -1; }

reid_status reid_server_wait(reid_server* server) {
  return guarded([&] {
    require(server != nullptr, "server is NULL");
    server->service->wait();
  });
}

void reid_server_stop(reid_server* server) {
  if (server) server->service->stop();
}

void reid_server_destroy(reid_server* server) { delete server; }

}  // extern "C"
