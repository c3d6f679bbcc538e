// Acceptance harness: one PASS/FAIL line per criterion, non-zero exit when
// any criterion fails. Synthetic corpora are cached under --work-dir.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "common/fixtures.hpp"
#include "common/persistence.hpp"
#include "reid/corpus.hpp"
#include "reid/eval.hpp"
#include "reid/gallery_store.hpp"
#include "reid/matcher.hpp"
#include "reid/pipeline.hpp"
#include "reid/synthgen.hpp"

namespace fs = std::filesystem;
using namespace reid;

namespace {

// Pinned tolerances.
constexpr double kOracleTolerance = 1e-9;
constexpr double kBruteforceSeconds = 10;
constexpr double kRansacSeconds = 30;
constexpr size_t kRansacMinPlanted = 38;
constexpr size_t kRansacMaxSpurious = 2;
constexpr int kRansacMinCases = 95;
constexpr double kExhaustiveTop1 = 0.95;
constexpr double kTwoStageMaxLoss = 0.02;
constexpr double kRuntimeRatio = 0.5;
constexpr double kClosedSetSeconds = 30 * 60;
constexpr double kCalibrationTarget = 0.95;
constexpr size_t kSplitLow = 38, kSplitHigh = 40;
constexpr int kPersistenceSequences = 1000;
constexpr size_t kStandardK = 50;
constexpr size_t kSweepK = 10;

int failures = 0;

void report(const std::string& name, bool pass, const std::string& detail) {
  std::cout << (pass ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
  if (!pass) ++failures;
}

void criterion(const std::string& name, const std::function<std::pair<bool, std::string>()>& body) {
  try {
    auto [pass, detail] = body();
    report(name, pass, detail);
  } catch (const std::exception& e) {
    report(name, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// ---- matcher ----

std::pair<bool, std::string> bruteforce_oracle() {
  Rng rng(20140401);
  double worst = 0;
  size_t index_mismatches = 0;
  double seconds = 0;
  for (int t = 0; t < 50; ++t) {
    const size_t n = 1 + rng.below(200), m = 1 + rng.below(200);
    const DescriptorMatrix a = testing::random_descriptors(rng, n, 128);
    const DescriptorMatrix b = testing::random_descriptors(rng, m, 128);
    std::vector<NeighborPair> got;
    seconds += measure_runtime([&] { got = match_bruteforce(a, b); });
    if (got.size() != n) return {false, "wrong row count"};
    for (size_t i = 0; i < n; ++i) {
      double d1 = std::numeric_limits<double>::infinity(), d2 = d1;
      size_t best = 0;
      for (size_t j = 0; j < m; ++j) {
        double s = 0;
        for (size_t c = 0; c < 128; ++c) {
          const double d = double(a.data[i * 128 + c]) - double(b.data[j * 128 + c]);
          s += d * d;
        }
        const double dist = std::sqrt(s);
        if (dist < d1) {
          d2 = d1;
          d1 = dist;
          best = j;
        } else if (dist < d2) {
          d2 = dist;
        }
      }
      if (got[i].index_a != i || got[i].index_b != best) ++index_mismatches;
      worst = std::max(worst, std::abs(got[i].d1 - d1));
      if (std::isinf(d2) != std::isinf(got[i].d2)) return {false, "second-neighbour infinity mismatch"};
      if (!std::isinf(d2)) worst = std::max(worst, std::abs(got[i].d2 - d2));
    }
  }
  return {worst <= kOracleTolerance && index_mismatches == 0 && seconds < kBruteforceSeconds,
          fmt("max |diff| %.3g, index mismatches %zu, %.2f s", worst, index_mismatches, seconds)};
}

std::pair<bool, std::string> ransac_recovery() {
  Rng rng(7);
  MatchConfig cfg;
  cfg.inlier_threshold_px = 3.0;
  cfg.ransac_iterations = 2000;
  int good = 0;
  const double seconds = measure_runtime([&] {
    for (int t = 0; t < 100; ++t) {
      // mild random perspective around a similarity
      const double angle = rng.uniform(-0.5, 0.5), scale = rng.uniform(0.8, 1.2);
      const Homography h = {scale * std::cos(angle), -scale * std::sin(angle), rng.uniform(-40, 40),
                            scale * std::sin(angle), scale * std::cos(angle), rng.uniform(-40, 40),
                            rng.uniform(-2e-4, 2e-4), rng.uniform(-2e-4, 2e-4), 1};
      std::vector<Keypoint> ka, kb;
      std::vector<Correspondence> corr;
      for (uint32_t i = 0; i < 60; ++i) {
        const double x = rng.uniform(0, 400), y = rng.uniform(0, 400);
        auto [u, v] = apply_homography(h, x, y);
        if (i >= 40) {
          // outliers land far from their true image
          do {
            u = rng.uniform(0, 400);
            v = rng.uniform(0, 400);
          } while (std::hypot(u - apply_homography(h, x, y)[0], v - apply_homography(h, x, y)[1]) < 20);
        }
        ka.push_back({float(x), float(y), 1, 0, 1});
        kb.push_back({float(u), float(v), 1, 0, 1});
        corr.push_back({i, i, 1, float(x), float(y), float(u), float(v)});
      }
      const auto r = estimate_homography_ransac(corr, ka, kb, cfg, derive_seed(99, t));
      size_t planted = 0, spurious = 0;
      for (auto i : r.inliers) (i < 40 ? planted : spurious)++;
      if (planted >= kRansacMinPlanted && spurious <= kRansacMaxSpurious) ++good;
    }
  });
  return {good >= kRansacMinCases && seconds < kRansacSeconds, fmt("%d/100 recovered, %.2f s", good, seconds)};
}

// ---- protocol and metrics ----

std::pair<bool, std::string> protocol_fidelity() {
  const auto captures = testing::protocol_fixture();
  const auto expected = testing::protocol_fixture_expected();
  const ProtocolInstance p = build_protocol(captures);
  std::map<std::string, CaptureDate> date_of;
  for (const auto& c : captures) date_of[c.image_id] = c.capture_date;
  if (p.queries.size() != expected.size()) return {false, fmt("%zu queries", p.queries.size())};
  size_t pairs = 0;
  for (const auto& q : p.queries) {
    auto it = expected.find(q.image_id);
    if (it == expected.end() || it->second != q.references) return {false, "reference set of " + q.image_id};
    for (const auto& r : q.references) {
      ++pairs;
      if (date_of.at(r) == date_of.at(q.image_id)) return {false, "same-date pair " + q.image_id + "/" + r};
    }
  }
  return {true, fmt("%zu queries, %zu cross-date pairs, no same-date pair", p.queries.size(), pairs)};
}

std::pair<bool, std::string> metric_correctness() {
  const std::vector<std::vector<std::string>> ranked = {{"X", "T", "T", "Y", "Z"}};
  const std::vector<std::string> truth = {"T"};
  const bool topk_ok = topk_accuracy(ranked, truth, 1, RankLevel::kImage) == 0.0 &&
                       topk_accuracy(ranked, truth, 1, RankLevel::kIdentity) == 0.0 &&
                       topk_accuracy(ranked, truth, 3, RankLevel::kImage) == 1.0 &&
                       topk_accuracy(ranked, truth, 3, RankLevel::kIdentity) == 1.0;

  const std::vector<double> scores = {5, 3, 4};
  const bool labels[] = {true, true, false};
  const PRCurve c = pr_curve(scores, labels);
  auto at = [&](double t) -> const PRPoint* {
    for (const auto& p : c.points)
      if (p.threshold == t) return &p;
    return nullptr;
  };
  const bool pr_ok = c.points.size() == 3 && at(5) && at(3) && at(5)->precision == 1.0 &&
                     at(5)->recall == 0.5 && at(3)->precision == 2.0 / 3.0 && at(3)->recall == 1.0;

  Rng rng(1000);
  size_t violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const size_t queries = 1 + rng.below(8), ids = 2 + rng.below(6), len = 1 + rng.below(15);
    std::vector<std::vector<std::string>> r(queries);
    std::vector<std::string> tr(queries);
    for (size_t q = 0; q < queries; ++q) {
      tr[q] = "I" + std::to_string(rng.below(ids));
      for (size_t i = 0; i < len; ++i) r[q].push_back("I" + std::to_string(rng.below(ids)));
    }
    for (size_t k = 1; k <= len; ++k) {
      if (topk_accuracy(r, tr, k, RankLevel::kIdentity) < topk_accuracy(r, tr, k, RankLevel::kImage)) ++violations;
    }
  }
  return {topk_ok && pr_ok && violations == 0,
          fmt("top-k fixture %s, PR fixture %s, %zu monotonicity violations in 1000 rankings",
              topk_ok ? "exact" : "wrong", pr_ok ? "exact" : "wrong", violations)};
}

// ---- synthetic corpora ----

Gallery cached_corpus(const fs::path& dir, int image_size, const DetectorConfig& detector) {
  if (!fs::exists(dir / "features")) {
    fs::remove_all(dir);
    DatasetSpec spec;  // 60 identities x 4 sessions x 3 images, base seed 7, amplitude 0.03
    spec.session.image_size = image_size;
    std::cout << "  generating " << dir.filename().string() << " ..." << std::flush;
    const double gen = measure_runtime([&] { generate_dataset(spec, dir.string()); });
    Gallery g;
    const double ext = measure_runtime(
        [&] { g = extract_corpus((dir / "manifest.csv").string(), detector, ThumbnailConfig{}); });
    write_corpus_features(g, (dir / "features.tmp").string(), (dir / "embeddings.ride").string());
    fs::rename(dir / "features.tmp", dir / "features");
    std::cout << fmt(" render %.0f s, extract %.0f s", gen, ext) << std::endl;
    return g;
  }
  return load_corpus(dir.string(), detector, ThumbnailConfig{});
}

bool same_ranking(const QueryOutcome& a, const QueryOutcome& b) {
  if (a.query_id != b.query_id || !(a.decision == b.decision) || a.ranking.size() != b.ranking.size()) return false;
  for (size_t i = 0; i < a.ranking.size(); ++i) {
    const auto &x = a.ranking[i], &y = b.ranking[i];
    if (x.image_id != y.image_id || x.identity_id != y.identity_id || x.scored != y.scored ||
        std::memcmp(&x.score, &y.score, sizeof(double)) != 0) {
      return false;
    }
  }
  return true;
}

double top1_identity(const ProtocolRun& run) {
  const size_t k[] = {1};
  for (const auto& row : topk_table(run, "", k))
    if (row.level == RankLevel::kIdentity) return row.accuracy;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance criteria");
  std::string work_dir = (fs::temp_directory_path() / "reid_acceptance").string();
  app.add_option("--work-dir", work_dir, "Cache directory for synthetic corpora");
  CLI11_PARSE(app, argc, argv);
  fs::create_directories(work_dir);
  const fs::path work(work_dir);

  criterion("bruteforce-oracle", bruteforce_oracle);
  criterion("ransac-recovery", ransac_recovery);
  criterion("protocol-fidelity", protocol_fidelity);
  criterion("metric-correctness", metric_correctness);

  std::optional<Gallery> standard;
  std::optional<ProtocolInstance> protocol;
  std::optional<ProtocolRun> exhaustive, two_stage;
  const double closed_set_seconds = measure_runtime([&] {
    try {
      standard = cached_corpus(work / "standard", 256, DetectorConfig{});
      protocol = build_protocol(*standard);
      const GalleryIndex index(*standard);
      PipelineConfig cfg;
      exhaustive = run_protocol(*protocol, index, cfg, true);
      cfg.k = kStandardK;
      two_stage = run_protocol(*protocol, index, cfg, false);
    } catch (const std::exception& e) {
      std::cout << "  standard corpus: " << e.what() << std::endl;
    }
  });

  criterion("two-stage-full-k", [&]() -> std::pair<bool, std::string> {
    if (!exhaustive) return {false, "standard corpus unavailable"};
    const GalleryIndex index(*standard);
    PipelineConfig cfg;
    cfg.k = index.size();
    const ProtocolRun full = run_protocol(*protocol, index, cfg, false);
    size_t same = 0;
    for (size_t i = 0; i < full.outcomes.size(); ++i) same += same_ranking(full.outcomes[i], exhaustive->outcomes[i]);
    return {same == exhaustive->outcomes.size() && same == 720,
            fmt("%zu/%zu queries identical at k=%zu", same, exhaustive->outcomes.size(), cfg.k)};
  });

  criterion("closed-set-accuracy", [&]() -> std::pair<bool, std::string> {
    if (!exhaustive || !two_stage) return {false, "standard corpus unavailable"};
    const double ex = top1_identity(*exhaustive), ts = top1_identity(*two_stage);
    return {ex >= kExhaustiveTop1 && ts >= ex - kTwoStageMaxLoss && closed_set_seconds < kClosedSetSeconds,
            fmt("exhaustive top-1 %.4f, two-stage k=%zu top-1 %.4f, %.0f s total", ex, kStandardK, ts,
                closed_set_seconds)};
  });

  criterion("runtime-ordering", [&]() -> std::pair<bool, std::string> {
    if (!exhaustive || !two_stage) return {false, "standard corpus unavailable"};
    return {two_stage->seconds < kRuntimeRatio * exhaustive->seconds,
            fmt("two-stage %.1f s vs exhaustive %.1f s (ratio %.3f)", two_stage->seconds, exhaustive->seconds,
                two_stage->seconds / exhaustive->seconds)};
  });

  criterion("keypoint-budget-sweep", [&]() -> std::pair<bool, std::string> {
    DetectorConfig dense;
    dense.contrast_threshold = 0.001;
    dense.edge_threshold = 1e6;
    dense.scales_per_octave = 6;
    const Gallery g = cached_corpus(work / "dense512", 512, dense);
    const ProtocolInstance p = build_protocol(g);
    PipelineConfig cfg;
    cfg.k = kSweepK;
    const uint32_t budgets[] = {1432, 800, 400, 200};
    const auto rows = keypoint_budget_sweep(g, p, cfg, budgets, false);
    std::cout << format_budget_csv(rows);
    bool decreasing = rows.size() == 4;
    for (size_t i = 1; i < rows.size(); ++i) decreasing = decreasing && rows[i].seconds < rows[i - 1].seconds;
    std::ostringstream detail;
    detail << "runtime by M:";
    for (const auto& r : rows) detail << fmt(" %u=%.1fs", r.max_keypoints, r.seconds);
    detail << (decreasing ? " strictly decreasing" : " NOT monotone");
    return {decreasing, detail.str()};
  });

  criterion("calibration-round-trip", [&]() -> std::pair<bool, std::string> {
    if (!exhaustive) return {false, "standard corpus unavailable"};
    const PairScores pairs = collect_pair_scores(*protocol, *exhaustive);
    const std::unique_ptr<bool[]> labels(new bool[pairs.score.size()]);
    std::copy(pairs.same_identity.begin(), pairs.same_identity.end(), labels.get());
    const PRCurve curve = pr_curve(pairs.score, std::span<const bool>(labels.get(), pairs.score.size()));
    auto recount = [&](double t) {
      uint64_t tp = 0, fp = 0, fn = 0;
      for (size_t i = 0; i < pairs.score.size(); ++i) {
        const bool predicted = pairs.score[i] >= t;
        tp += predicted && pairs.same_identity[i];
        fp += predicted && !pairs.same_identity[i];
        fn += !predicted && pairs.same_identity[i];
      }
      return std::pair{tp + fp ? double(tp) / double(tp + fp) : 1.0, double(tp) / double(tp + fn)};
    };
    const Calibration r = calibrate_threshold(curve, {CalibrationTarget::Metric::kRecall, kCalibrationTarget});
    const Calibration p = calibrate_threshold(curve, {CalibrationTarget::Metric::kPrecision, kCalibrationTarget});
    const auto [rp, rr] = recount(r.threshold);
    const auto [pp, pr] = recount(p.threshold);
    return {rr >= kCalibrationTarget && pp >= kCalibrationTarget,
            fmt("%zu pairs; recall target: tau %g recall %.4f precision %.4f; precision target: tau %g precision "
                "%.4f recall %.4f",
                pairs.score.size(), r.threshold, rr, rp, p.threshold, pp, pr)};
  });

  criterion("split-stratification", [&]() -> std::pair<bool, std::string> {
    std::map<std::string, int> dates;
    int n = 0;
    for (auto [count, d] : std::vector<std::pair<int, int>>{{137, 1}, {43, 2}, {8, 3}, {2, 4}, {1, 5}}) {
      for (int i = 0; i < count; ++i) dates[fmt("L%03d", n++)] = d;
    }
    std::set<size_t> sizes;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
      const IdentitySplit s = split_identities(dates, 0.2, seed);
      if (s.train.size() + s.validation.size() != dates.size()) return {false, "identities lost"};
      sizes.insert(s.validation.size());
    }
    const bool ok = *sizes.begin() >= kSplitLow && *sizes.rbegin() <= kSplitHigh;
    return {ok, fmt("validation size %zu..%zu over 20 seeds", *sizes.begin(), *sizes.rbegin())};
  });

  criterion("persistence", [&]() -> std::pair<bool, std::string> {
    size_t ops = 0, rejected = 0;
    for (int seed = 1; seed <= kPersistenceSequences; ++seed) {
      const auto r = testing::run_persistence_sequence(work / "persistence", seed);
      if (!r.failure.empty()) return {false, r.failure};
      ops += r.operations;
      rejected += r.rejected;
    }
    return {true, fmt("%d sequences, %zu operations, %zu rejected as expected", kPersistenceSequences, ops,
                      rejected)};
  });

  std::cout << (failures ? fmt("%d criteria failed", failures) : std::string("all criteria passed")) << std::endl;
  return failures ? 1 : 0;
}
