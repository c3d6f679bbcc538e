#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "reid/model.hpp"
#include "reid/pipeline.hpp"

namespace reid {

struct ProtocolQuery {
  std::string image_id;
  std::string identity_id;
  CaptureDate capture_date;
  std::vector<std::string> references;  // ascending image_id
};

struct ProtocolInstance {
  std::vector<ProtocolQuery> queries;               // ascending image_id
  std::map<std::string, std::string> identity_of;   // every labeled image
};

// Queries are the images of identities seen on at least two dates; each
// query references every image from another date. Throws kDomain "no
// evaluable queries" when no identity qualifies.
ProtocolInstance build_protocol(std::span<const CaptureRecord> captures);
ProtocolInstance build_protocol(const Gallery& gallery);

enum class RankLevel { kImage, kIdentity };
std::string to_string(RankLevel level);

// ranked_identities[q] lists the identity of each reference in rank order.
// Identity level collapses repeats by first appearance.
double topk_accuracy(std::span<const std::vector<std::string>> ranked_identities,
                     std::span<const std::string> truth, size_t k, RankLevel level);

struct ScoreHistogram {
  double origin = 0;
  double bin_width = 1;
  std::vector<uint64_t> same;
  std::vector<uint64_t> different;
};

ScoreHistogram score_histograms(std::span<const double> scores, std::span<const bool> same_identity,
                                double bin_width);

struct PRPoint {
  double threshold = 0;
  double precision = 0;
  double recall = 0;
  uint64_t tp = 0, fp = 0, fn = 0;

  bool operator==(const PRPoint&) const = default;
};

struct PRCurve {
  std::vector<PRPoint> points;  // ascending threshold, one per distinct score
  uint64_t positives = 0;
  uint64_t negatives = 0;
};

// Positive prediction iff score >= threshold. Throws kDomain without at
// least one positive and one negative.
PRCurve pr_curve(std::span<const double> scores, std::span<const bool> positive);

struct CalibrationTarget {
  enum class Metric { kRecall, kPrecision };
  Metric metric = Metric::kPrecision;
  double value = 0.95;
};

struct Calibration {
  double threshold = 0;
  double precision = 0;
  double recall = 0;
};

// Recall target: largest threshold with recall >= value. Precision target:
// smallest threshold with precision >= value. Throws kInfeasible otherwise.
Calibration calibrate_threshold(const PRCurve& curve, const CalibrationTarget& target);

struct IdentitySplit {
  std::vector<std::string> train;
  std::vector<std::string> validation;
};

// Stratified by distinct-date count; each group sends
// round_half_away_from_zero(fraction * size) identities to validation.
IdentitySplit split_identities(const std::map<std::string, int>& distinct_dates, double fraction,
                               uint64_t seed);

double measure_runtime(const std::function<void()>& task);

// One identification per protocol query against its reference set.
struct QueryOutcome {
  std::string query_id;
  std::string truth;
  std::vector<PooledCandidate> ranking;  // scored first, then display-only tail
  Decision decision;
};

struct ProtocolRun {
  std::vector<QueryOutcome> outcomes;
  double seconds = 0;
};

ProtocolRun run_protocol(const ProtocolInstance& protocol, const GalleryIndex& gallery,
                         const PipelineConfig& config, bool exhaustive);

struct TopkRow {
  std::string model;
  size_t k = 1;
  RankLevel level = RankLevel::kImage;
  double accuracy = 0;
  size_t queries = 0;
};

std::vector<TopkRow> topk_table(const ProtocolRun& run, const std::string& model,
                                std::span<const size_t> ks);

struct PairScores {
  std::vector<std::string> image_a;
  std::vector<std::string> image_b;
  std::vector<double> score;
  std::vector<bool> same_identity;
};

// Every unordered cross-date pair once; a pair of two queries is read from
// the run of the lexicographically smaller one. Needs an exhaustive run.
PairScores collect_pair_scores(const ProtocolInstance& protocol, const ProtocolRun& run);

struct BudgetRow {
  uint32_t max_keypoints = 0;
  double mean_keypoints = 0;
  double seconds = 0;  // identification only
  double top1_image = 0;
  double top1_identity = 0;
  size_t queries = 0;
};

// Truncates every entry to each budget M (strongest responses kept) and
// reruns the protocol; rows follow the order of budgets.
std::vector<BudgetRow> keypoint_budget_sweep(const Gallery& gallery,
                                             const ProtocolInstance& protocol,
                                             const PipelineConfig& config,
                                             std::span<const uint32_t> budgets, bool exhaustive);

std::string format_topk_csv(std::span<const TopkRow> rows);
std::string format_pr_csv(const PRCurve& curve);
std::string format_histogram_csv(const ScoreHistogram& histogram);
std::string format_pairs_csv(const PairScores& pairs);
std::string format_budget_csv(std::span<const BudgetRow> rows);

}  // namespace reid
