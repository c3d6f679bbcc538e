#ifndef REID_REID_H_
#define REID_REID_H_

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define REID_API __declspec(dllexport)
#else
#define REID_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum reid_status {
  REID_OK = 0,
  REID_INVALID_ARGUMENT = 1,
  REID_FORMAT = 2,
  REID_TRUNCATED = 3,
  REID_IO = 4,
  REID_NOT_FOUND = 5,
  REID_CONFLICT = 6,
  REID_UNDERDETERMINED = 7,
  REID_DEGENERATE_GEOMETRY = 8,
  REID_INFEASIBLE = 9,
  REID_DOMAIN = 10,
  REID_INTERNAL = 100
} reid_status;

/* Message of the last failed call on this thread ("" after success). */
REID_API const char* reid_last_error(void);
REID_API const char* reid_status_name(reid_status status);
REID_API const char* reid_version(void);

/* Releases strings and buffers handed out by this library. */
REID_API void reid_free(void* p);

/* 0 selects the number of hardware threads. */
REID_API void reid_set_threads(unsigned threads);

/* ---- context: configuration shared by every call ---- */

typedef struct reid_context reid_context;

/* config_path may be NULL for defaults. */
REID_API reid_status reid_context_create(const char* config_path, reid_context** out);
REID_API void reid_context_destroy(reid_context* ctx);
/* key is "section.key", value uses config-file syntax. */
REID_API reid_status reid_context_set(reid_context* ctx, const char* key, const char* value);
/* Sets pipeline.root_seed and synth.seed. */
REID_API reid_status reid_context_set_seed(reid_context* ctx, uint64_t seed);
REID_API reid_status reid_context_dump(const reid_context* ctx, char** out_text);

/* ---- features ---- */

/* image_id NULL: the image file stem. mask_path may be NULL. */
REID_API reid_status reid_extract(const reid_context* ctx, const char* image_path,
                                  const char* mask_path, int rotation_quarter_turns,
                                  const char* image_id, const char* out_feature_path);

/* Features for every manifest row into features_dir, plus an embedding file
   when embeddings_path is not NULL. */
REID_API reid_status reid_extract_manifest(const reid_context* ctx, const char* manifest_path,
                                           const char* features_dir, const char* embeddings_path,
                                           size_t* out_count);

/* Validates an adapter feature file and stores it as <out_dir>/<image_id>.ridf. */
REID_API reid_status reid_import_features(const char* feature_path, const char* out_dir,
                                          char** out_image_id);

/* Validates an adapter embedding file and writes it unit-normalized. */
REID_API reid_status reid_import_embeddings(const char* embeddings_path, const char* out_path,
                                            size_t* out_count);

/* ---- pairwise matching ---- */

/* out_match_path may be NULL. */
REID_API reid_status reid_match_files(const reid_context* ctx, const char* features_a,
                                      const char* features_b, const char* out_match_path,
                                      uint32_t* out_similarity);
REID_API reid_status reid_import_matches(const char* match_path, uint32_t* out_similarity);

/* ---- gallery ---- */

typedef struct reid_gallery reid_gallery;

/* Builds a gallery directory from a manifest and feature files.
   embeddings_path may be NULL. */
REID_API reid_status reid_gallery_ingest(const char* manifest_path, const char* features_dir,
                                         const char* embeddings_path, const char* gallery_dir,
                                         size_t* out_count);
REID_API reid_status reid_gallery_open(const char* gallery_dir, reid_gallery** out);
REID_API void reid_gallery_close(reid_gallery* gallery);
REID_API reid_status reid_gallery_counts(const reid_gallery* gallery, size_t* out_images,
                                         size_t* out_identities, size_t* out_decisions);
/* identity_id, capture_date, n_images, n_captures. */
REID_API reid_status reid_gallery_report(const reid_gallery* gallery, char** out_csv);
REID_API reid_status reid_gallery_set_threshold(reid_gallery* gallery, const char* mode,
                                                const char* name, double threshold);

/* ---- identification ---- */

typedef struct reid_query_image {
  const char* image_path;
  const char* mask_path;    /* NULL: no mask */
  const char* capture_date; /* "YYYY-MM-DD" or NULL */
  int rotation_quarter_turns;
} reid_query_image;

typedef struct reid_candidate {
  const char* image_id;
  const char* identity_id;
  double score;
  int scored;           /* 0: outside every shortlist */
  int has_stage1_score;
  double stage1_score;
} reid_candidate;

typedef struct reid_ranking reid_ranking;

/* exhaustive != 0 skips stage 1. exclude_same_date != 0 drops gallery images
   taken on a query's date. */
REID_API reid_status reid_identify(const reid_context* ctx, const reid_gallery* gallery,
                                   const reid_query_image* images, size_t n_images,
                                   int exhaustive, int exclude_same_date, reid_ranking** out);
REID_API void reid_ranking_destroy(reid_ranking* ranking);
REID_API size_t reid_ranking_size(const reid_ranking* ranking);
/* Pointers stay valid while the ranking lives. */
REID_API reid_status reid_ranking_candidate(const reid_ranking* ranking, size_t index,
                                            reid_candidate* out);
REID_API reid_status reid_ranking_decision(const reid_ranking* ranking, int* out_is_match,
                                           const char** out_identity_id, double* out_score,
                                           double* out_threshold);
/* Outcome only: pooled ranking, decision and threshold. */
REID_API reid_status reid_ranking_json(const reid_ranking* ranking, char** out_json);
/* Per-query stage-1 shortlists. */
REID_API reid_status reid_ranking_stage1_json(const reid_ranking* ranking, char** out_json);

/* ---- evaluation ---- */

/* Runs the closed-set protocol on a corpus directory (manifest.csv plus
   images, or a gallery directory) and writes CSV files into out_dir:
   topk.csv and runtime.csv always; pairs.csv, pr.csv and histogram.csv
   when exhaustive != 0. two_stage != 0 adds a run with pipeline.k. */
REID_API reid_status reid_evaluate(const reid_context* ctx, const char* corpus_dir,
                                   const char* out_dir, int exhaustive, int two_stage,
                                   char** out_summary);

/* Keypoint-budget sweep over eval.keypoint_budgets into out_csv. */
REID_API reid_status reid_keypoint_sweep(const reid_context* ctx, const char* corpus_dir,
                                         const char* out_csv, int exhaustive);

typedef enum reid_target_metric { REID_TARGET_RECALL = 0, REID_TARGET_PRECISION = 1 } reid_target_metric;

/* Threshold from a pairs.csv written by reid_evaluate. out_pr_csv may be NULL. */
REID_API reid_status reid_calibrate(const char* pairs_csv, reid_target_metric metric,
                                    double target, const char* out_pr_csv,
                                    double* out_threshold, double* out_precision,
                                    double* out_recall);

/* Stratified identity split of a manifest; writes identity_id,n_dates,split. */
REID_API reid_status reid_split(const reid_context* ctx, const char* manifest_path,
                                const char* out_csv, size_t* out_validation);

/* ---- synthetic data ---- */

REID_API reid_status reid_synth(const reid_context* ctx, const char* out_dir, size_t* out_images);

/* ---- service ---- */

typedef struct reid_server reid_server;

/* Serves gallery_dir on service.host:service.port in the background.
   static_dir may be NULL. */
REID_API reid_status reid_server_start(const reid_context* ctx, const char* gallery_dir,
                                       const char* static_dir, reid_server** out);
REID_API int reid_server_port(const reid_server* server);
/* Blocks until reid_server_stop is called from another thread or a signal
   handler requests shutdown. */
REID_API reid_status reid_server_wait(reid_server* server);
REID_API void reid_server_stop(reid_server* server);
REID_API void reid_server_destroy(reid_server* server);

#ifdef __cplusplus
}
#endif

#endif  // REID_REID_H_
