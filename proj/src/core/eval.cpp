#include "reid/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "reid/local_features.hpp"
#include "reid/manifest.hpp"
#include "reid/util.hpp"

namespace reid {

ProtocolInstance build_protocol(std::span<const CaptureRecord> captures) {
  std::vector<const CaptureRecord*> labeled;
  for (const auto& c : captures) {
    if (c.identity_id) labeled.push_back(&c);
  }
  std::sort(labeled.begin(), labeled.end(),
            [](const CaptureRecord* a, const CaptureRecord* b) { return a->image_id < b->image_id; });
  std::map<std::string, std::set<CaptureDate>> dates;
  ProtocolInstance out;
  for (const CaptureRecord* c : labeled) {
    if (!out.identity_of.emplace(c->image_id, *c->identity_id).second) {
      throw Error(ErrorCode::kInvalidArgument, "duplicate image_id " + c->image_id);
    }
    dates[*c->identity_id].insert(c->capture_date);
  }
  for (const CaptureRecord* q : labeled) {
    if (dates[*q->identity_id].size() < 2) continue;
    ProtocolQuery pq{q->image_id, *q->identity_id, q->capture_date, {}};
    for (const CaptureRecord* r : labeled) {
      if (r->capture_date != q->capture_date) pq.references.push_back(r->image_id);
    }
    out.queries.push_back(std::move(pq));
  }
  if (out.queries.empty()) throw Error(ErrorCode::kDomain, "no evaluable queries");
  return out;
}

ProtocolInstance build_protocol(const Gallery& gallery) {
  std::vector<CaptureRecord> records;
  for (const auto& [id, e] : gallery.entries) records.push_back(e.capture);
  return build_protocol(records);
}

std::string to_string(RankLevel level) {
  return level == RankLevel::kImage ? "image" : "identity";
}

double topk_accuracy(std::span<const std::vector<std::string>> ranked, std::span<const std::string> truth,
                     size_t k, RankLevel level) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (ranked.size() != truth.size()) {
    throw Error(ErrorCode::kInvalidArgument, "rankings and ground truth differ in length");
  }
  if (ranked.empty()) return 0.0;
  size_t hits = 0;
  for (size_t q = 0; q < ranked.size(); ++q) {
    if (level == RankLevel::kImage) {
      const size_t n = std::min(k, ranked[q].size());
      hits += std::find(ranked[q].begin(), ranked[q].begin() + n, truth[q]) != ranked[q].begin() + n;
      continue;
    }
    std::vector<const std::string*> distinct;
    for (const auto& id : ranked[q]) {
      if (distinct.size() == k) break;
      if (std::none_of(distinct.begin(), distinct.end(), [&](const std::string* s) { return *s == id; })) {
        distinct.push_back(&id);
      }
    }
    hits += std::any_of(distinct.begin(), distinct.end(),
                        [&](const std::string* s) { return *s == truth[q]; });
  }
  return static_cast<double>(hits) / ranked.size();
}

ScoreHistogram score_histograms(std::span<const double> scores, std::span<const bool> same,
                                double bin_width) {
  if (!(bin_width > 0)) throw Error(ErrorCode::kInvalidArgument, "bin width must be > 0");
  if (scores.size() != same.size()) {
    throw Error(ErrorCode::kInvalidArgument, "scores and labels differ in length");
  }
  ScoreHistogram h;
  h.bin_width = bin_width;
  if (scores.empty()) return h;
  const auto [lo, hi] = std::minmax_element(scores.begin(), scores.end());
  h.origin = std::floor(*lo / bin_width) * bin_width;
  const size_t bins = static_cast<size_t>(std::floor((*hi - h.origin) / bin_width)) + 1;
  h.same.assign(bins, 0);
  h.different.assign(bins, 0);
  for (size_t i = 0; i < scores.size(); ++i) {
    const size_t b = std::min(bins - 1, static_cast<size_t>(std::floor((scores[i] - h.origin) / bin_width)));
    (same[i] ? h.same : h.different)[b]++;
  }
  return h;
}

PRCurve pr_curve(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) {
    throw Error(ErrorCode::kInvalidArgument, "scores and labels differ in length");
  }
  PRCurve c;
  std::vector<std::pair<double, bool>> items;
  for (size_t i = 0; i < scores.size(); ++i) {
    items.emplace_back(scores[i], positive[i]);
    (positive[i] ? c.positives : c.negatives)++;
  }
  if (c.positives == 0 || c.negatives == 0) {
    throw Error(ErrorCode::kDomain, "degenerate label set: need positives and negatives");
  }
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.first > b.first; });
  // Walk thresholds from high to low; at each distinct score every item with
  // score >= threshold is predicted positive.
  uint64_t tp = 0, fp = 0;
  for (size_t i = 0; i < items.size();) {
    const double t = items[i].first;
    while (i < items.size() && items[i].first == t) {
      (items[i].second ? tp : fp)++;
      ++i;
    }
    PRPoint p;
    p.threshold = t;
    p.tp = tp;
    p.fp = fp;
    p.fn = c.positives - tp;
    p.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    p.recall = static_cast<double>(tp) / static_cast<double>(c.positives);
    c.points.push_back(p);
  }
  std::reverse(c.points.begin(), c.points.end());
  return c;
}

Calibration calibrate_threshold(const PRCurve& curve, const CalibrationTarget& target) {
  const bool recall = target.metric == CalibrationTarget::Metric::kRecall;
  const PRPoint* chosen = nullptr;
  for (const PRPoint& p : curve.points) {
    if (recall ? p.recall >= target.value : p.precision >= target.value) {
      if (recall) {
        chosen = &p;  // ascending thresholds: keep the last
      } else if (!chosen) {
        chosen = &p;
      }
    }
  }
  if (!chosen) {
    double best = 0;
    for (const PRPoint& p : curve.points) best = std::max(best, recall ? p.recall : p.precision);
    std::ostringstream msg;
    msg << "target infeasible: " << (recall ? "recall" : "precision") << " >= " << target.value
        << " not reached; frontier " << best;
    throw Error(ErrorCode::kInfeasible, msg.str());
  }
  return Calibration{chosen->threshold, chosen->precision, chosen->recall};
}

IdentitySplit split_identities(const std::map<std::string, int>& distinct_dates, double fraction,
                               uint64_t seed) {
  if (!(fraction > 0 && fraction < 1)) {
    throw Error(ErrorCode::kInvalidArgument, "fraction must be in (0,1)");
  }
  std::map<int, std::vector<std::string>> groups;
  for (const auto& [id, n] : distinct_dates) groups[n].push_back(id);
  IdentitySplit out;
  Rng rng(seed);
  for (auto& [n, ids] : groups) {
    for (size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.below(i)]);
    const auto take = static_cast<size_t>(std::round(fraction * static_cast<double>(ids.size())));
    out.validation.insert(out.validation.end(), ids.begin(), ids.begin() + take);
    out.train.insert(out.train.end(), ids.begin() + take, ids.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  return out;
}

double measure_runtime(const std::function<void()>& task) {
  const auto start = std::chrono::steady_clock::now();
  task();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

ProtocolRun run_protocol(const ProtocolInstance& protocol, const GalleryIndex& gallery,
                         const PipelineConfig& config, bool exhaustive) {
  ProtocolRun run;
  const CandidateFilter filter = [](const QueryImage& q, const GalleryEntry& e) {
    return !e.capture.identity_id || (q.capture_date && *q.capture_date == e.capture.capture_date);
  };
  run.seconds = measure_runtime([&] {
    const auto ids = gallery.image_ids();
    for (const ProtocolQuery& pq : protocol.queries) {
      const auto it = std::lower_bound(ids.begin(), ids.end(), pq.image_id);
      if (it == ids.end() || *it != pq.image_id) {
        throw Error(ErrorCode::kNotFound, "query " + pq.image_id + " not in gallery");
      }
      const QueryImage q = query_from_entry(gallery.entry(it - ids.begin()));
      const std::span<const QueryImage> qs(&q, 1);
      RankedCandidates rc = exhaustive ? identify_local(qs, gallery, config, filter)
                                       : identify_two_stage(qs, gallery, config, filter);
      run.outcomes.push_back({pq.image_id, pq.identity_id, std::move(rc.stage2), rc.decision});
    }
  });
  return run;
}

std::vector<TopkRow> topk_table(const ProtocolRun& run, const std::string& model,
                                std::span<const size_t> ks) {
  std::vector<std::vector<std::string>> ranked;
  std::vector<std::string> truth;
  for (const auto& o : run.outcomes) {
    std::vector<std::string> ids;
    for (const auto& c : o.ranking) ids.push_back(c.identity_id);
    ranked.push_back(std::move(ids));
    truth.push_back(o.truth);
  }
  std::vector<TopkRow> rows;
  for (RankLevel level : {RankLevel::kImage, RankLevel::kIdentity}) {
    for (size_t k : ks) {
      rows.push_back({model, k, level, topk_accuracy(ranked, truth, k, level), ranked.size()});
    }
  }
  return rows;
}

PairScores collect_pair_scores(const ProtocolInstance& protocol, const ProtocolRun& run) {
  std::set<std::string> queries;
  for (const auto& q : protocol.queries) queries.insert(q.image_id);
  PairScores out;
  for (const auto& o : run.outcomes) {
    std::map<std::string, double> scored;
    for (const auto& c : o.ranking) {
      if (c.scored) scored[c.image_id] = c.score;
    }
    const auto pq = std::lower_bound(
        protocol.queries.begin(), protocol.queries.end(), o.query_id,
        [](const ProtocolQuery& q, const std::string& id) { return q.image_id < id; });
    for (const auto& r : pq->references) {
      if (queries.count(r) && r < o.query_id) continue;
      const auto s = scored.find(r);
      if (s == scored.end()) {
        throw Error(ErrorCode::kInvalidArgument, "pair scores need an exhaustive run (" +
                                                     o.query_id + ", " + r + " unscored)");
      }
      out.image_a.push_back(o.query_id);
      out.image_b.push_back(r);
      out.score.push_back(s->second);
      out.same_identity.push_back(protocol.identity_of.at(r) == o.truth);
    }
  }
  return out;
}

namespace {

std::string num(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

}  // namespace

std::vector<BudgetRow> keypoint_budget_sweep(const Gallery& gallery,
                                             const ProtocolInstance& protocol,
                                             const PipelineConfig& config,
                                             std::span<const uint32_t> budgets, bool exhaustive) {
  std::vector<BudgetRow> rows;
  for (uint32_t m : budgets) {
    Gallery cut = gallery;
    size_t total = 0;
    std::vector<GalleryEntry*> entries;
    for (auto& [id, e] : cut.entries) {
      if (!e.features) throw Error(ErrorCode::kInvalidArgument, "features unavailable for " + id);
      entries.push_back(&e);
    }
    parallel_for(entries.size(), [&](size_t i) {
      entries[i]->features =
          std::make_shared<const FeatureSet>(truncate_features(*entries[i]->features, m));
    });
    for (const GalleryEntry* e : entries) total += e->features->size();

    const GalleryIndex index(cut);
    const ProtocolRun run = run_protocol(protocol, index, config, exhaustive);
    const size_t k1[] = {1};
    const auto table = topk_table(run, "", k1);
    BudgetRow row;
    row.max_keypoints = m;
    row.mean_keypoints = entries.empty() ? 0.0 : static_cast<double>(total) / entries.size();
    row.seconds = run.seconds;
    row.top1_image = table[0].accuracy;
    row.top1_identity = table[1].accuracy;
    row.queries = run.outcomes.size();
    rows.push_back(row);
  }
  return rows;
}

std::string format_topk_csv(std::span<const TopkRow> rows) {
  std::ostringstream out;
  out << "model,k,level,accuracy,n_queries\n";
  for (const auto& r : rows) {
    out << csv_escape(r.model) << ',' << r.k << ',' << to_string(r.level) << ',' << num(r.accuracy)
        << ',' << r.queries << '\n';
  }
  return out.str();
}

std::string format_pr_csv(const PRCurve& curve) {
  std::ostringstream out;
  out << "threshold,precision,recall,TP,FP,FN\n";
  for (const auto& p : curve.points) {
    out << num(p.threshold) << ',' << num(p.precision) << ',' << num(p.recall) << ',' << p.tp
        << ',' << p.fp << ',' << p.fn << '\n';
  }
  return out.str();
}

std::string format_histogram_csv(const ScoreHistogram& h) {
  std::ostringstream out;
  out << "bin_start,bin_end,same_individual,different_individual\n";
  for (size_t b = 0; b < h.same.size(); ++b) {
    out << num(h.origin + b * h.bin_width) << ',' << num(h.origin + (b + 1) * h.bin_width) << ','
        << h.same[b] << ',' << h.different[b] << '\n';
  }
  return out.str();
}

std::string format_budget_csv(std::span<const BudgetRow> rows) {
  std::ostringstream out;
  out << "max_keypoints,mean_keypoints,runtime_s,top1_image,top1_identity,n_queries\n";
  for (const auto& r : rows) {
    out << r.max_keypoints << ',' << num(r.mean_keypoints) << ',' << num(r.seconds) << ','
        << num(r.top1_image) << ',' << num(r.top1_identity) << ',' << r.queries << '\n';
  }
  return out.str();
}

std::string format_pairs_csv(const PairScores& p) {
  std::ostringstream out;
  out << "image_a,image_b,score,same_identity\n";
  for (size_t i = 0; i < p.score.size(); ++i) {
    out << csv_escape(p.image_a[i]) << ',' << csv_escape(p.image_b[i]) << ',' << num(p.score[i])
        << ',' << (p.same_identity[i] ? 1 : 0) << '\n';
  }
  return out.str();
}

}  // namespace reid
