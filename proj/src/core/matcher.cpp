#include "reid/matcher.hpp"

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>

#include "reid/formats.hpp"
#include "reid/util.hpp"

namespace reid {

std::string to_string(SimilarityMode mode) {
  return mode == SimilarityMode::kRawCount ? "raw_count" : "ransac_inlier_count";
}

SimilarityMode parse_similarity_mode(const std::string& text) {
  if (text == "raw_count") return SimilarityMode::kRawCount;
  if (text == "ransac_inlier_count") return SimilarityMode::kRansacInlierCount;
  throw Error(ErrorCode::kInvalidArgument, "unknown similarity mode '" + text + "'");
}

void MatchConfig::validate() const {
  if (!(ratio > 0 && ratio <= 1)) throw Error(ErrorCode::kInvalidArgument, "ratio must be in (0,1]");
  if (ransac_iterations < 1) throw Error(ErrorCode::kInvalidArgument, "ransac_iterations must be >= 1");
  if (!(inlier_threshold_px > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "inlier_threshold_px must be > 0");
  }
  if (min_matches_for_ransac < 4) {
    throw Error(ErrorCode::kInvalidArgument, "min_matches_for_ransac must be >= 4");
  }
}

namespace {

double exact_sq_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    const double d = static_cast<double>(a[k]) - static_cast<double>(b[k]);
    s += d * d;
  }
  return s;
}

}  // namespace

std::vector<NeighborPair> match_bruteforce(const DescriptorMatrix& a, const DescriptorMatrix& b) {
  if (a.rows > 0 && b.rows > 0 && a.cols != b.cols) {
    throw Error(ErrorCode::kInvalidArgument, "descriptor dimension mismatch");
  }
  std::vector<NeighborPair> out;
  if (a.rows == 0 || b.rows == 0) return out;
  const size_t n = a.rows, m = b.rows, d = a.cols;

  // Screen with a float inner-product expansion, then settle the two
  // nearest with exact double distances over every row inside the
  // screening error margin.
  using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const RowMat> ma(a.data.data(), n, d);
  Eigen::Map<const RowMat> mb(b.data.data(), m, d);
  const RowMat dots = ma * mb.transpose();
  const Eigen::VectorXf na = ma.rowwise().squaredNorm();
  const Eigen::VectorXf nb = mb.rowwise().squaredNorm();
  const double max_b = std::sqrt(static_cast<double>(nb.maxCoeff()));
  const double unit = std::ldexp(1.0, -23);

  out.resize(n);
  std::vector<uint32_t> pool;
  for (size_t i = 0; i < n; ++i) {
    float s1 = std::numeric_limits<float>::infinity();
    float s2 = s1;
    for (size_t j = 0; j < m; ++j) {
      const float s = na[i] + nb[j] - 2.0f * dots(i, j);
      if (s < s1) {
        s2 = s1;
        s1 = s;
      } else if (s < s2) {
        s2 = s;
      }
    }
    const double norm_a = std::sqrt(static_cast<double>(na[i]));
    const double margin = 8.0 * (d + 4) * unit * (norm_a + max_b) * (norm_a + max_b) + 1e-30;
    const float cutoff = static_cast<float>((m > 1 ? s2 : s1) + margin);
    pool.clear();
    for (size_t j = 0; j < m; ++j) {
      if (na[i] + nb[j] - 2.0f * dots(i, j) <= cutoff) pool.push_back(static_cast<uint32_t>(j));
    }
    NeighborPair np;
    np.index_a = static_cast<uint32_t>(i);
    double e1 = std::numeric_limits<double>::infinity(), e2 = e1;
    uint32_t j1 = 0;
    for (uint32_t j : pool) {
      const double e = exact_sq_distance(a.row(i), b.row(j));
      if (e < e1) {
        e2 = e1;
        e1 = e;
        j1 = j;
      } else if (e < e2) {
        e2 = e;
      }
    }
    np.index_b = j1;
    np.d1 = std::sqrt(e1);
    np.d2 = m > 1 ? std::sqrt(e2) : std::numeric_limits<double>::infinity();
    out[i] = np;
  }
  return out;
}

std::vector<Correspondence> ratio_test(std::span<const NeighborPair> candidates, double ratio) {
  std::vector<Correspondence> out;
  for (const auto& c : candidates) {
    if (c.d1 < ratio * c.d2) {
      Correspondence k;
      k.index_a = c.index_a;
      k.index_b = c.index_b;
      k.score = std::isinf(c.d2) ? 1.0f : static_cast<float>(1.0 - c.d1 / c.d2);
      out.push_back(k);
    }
  }
  return out;
}

std::array<double, 2> apply_homography(const Homography& h, double x, double y) {
  const double w = h[6] * x + h[7] * y + h[8];
  return {(h[0] * x + h[1] * y + h[2]) / w, (h[3] * x + h[4] * y + h[5]) / w};
}

namespace {

using Pt = std::array<double, 2>;

// Similarity transform taking points to zero mean, mean distance sqrt(2).
Eigen::Matrix3d normalizer(std::span<const Pt> pts) {
  double cx = 0, cy = 0;
  for (const auto& p : pts) {
    cx += p[0];
    cy += p[1];
  }
  cx /= pts.size();
  cy /= pts.size();
  double mean = 0;
  for (const auto& p : pts) {
    const double dx = p[0] - cx, dy = p[1] - cy;
    mean += std::sqrt(dx * dx + dy * dy);
  }
  mean /= pts.size();
  const double s = mean > 1e-12 ? std::sqrt(2.0) / mean : 1.0;
  Eigen::Matrix3d t;
  t << s, 0, -s * cx, 0, s, -s * cy, 0, 0, 1;
  return t;
}

Pt transform(const Eigen::Matrix3d& t, const Pt& p) {
  return {t(0, 0) * p[0] + t(0, 2), t(1, 1) * p[1] + t(1, 2)};
}

bool finalize(const Eigen::Matrix3d& hn, const Eigen::Matrix3d& ta, const Eigen::Matrix3d& tb,
              Homography& out) {
  // tb is an isotropic scale plus translation
  Eigen::Matrix3d tb_inv;
  const double s = tb(0, 0);
  tb_inv << 1.0 / s, 0, -tb(0, 2) / s, 0, 1.0 / s, -tb(1, 2) / s, 0, 0, 1;
  Eigen::Matrix3d h = tb_inv * hn * ta;
  if (std::abs(h(2, 2)) > 1e-12) h /= h(2, 2);
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) {
      out[r * 3 + c] = h(r, c);
      if (!std::isfinite(out[r * 3 + c])) return false;
    }
  }
  return true;
}

// Projective map taking the unit square corners (0,0),(1,0),(1,1),(0,1) to
// the quad q, row-major with the last entry 1.
Eigen::Matrix3d square_to_quad(const std::array<Pt, 4>& q) {
  const double sx = q[0][0] - q[1][0] + q[2][0] - q[3][0];
  const double sy = q[0][1] - q[1][1] + q[2][1] - q[3][1];
  Eigen::Matrix3d m;
  if (sx == 0 && sy == 0) {
    m << q[1][0] - q[0][0], q[2][0] - q[1][0], q[0][0],
         q[1][1] - q[0][1], q[2][1] - q[1][1], q[0][1], 0, 0, 1;
    return m;
  }
  const double dx1 = q[1][0] - q[2][0], dx2 = q[3][0] - q[2][0];
  const double dy1 = q[1][1] - q[2][1], dy2 = q[3][1] - q[2][1];
  const double den = dx1 * dy2 - dx2 * dy1;
  const double g = (sx * dy2 - dx2 * sy) / den;
  const double h = (dx1 * sy - sx * dy1) / den;
  m << q[1][0] - q[0][0] + g * q[1][0], q[3][0] - q[0][0] + h * q[3][0], q[0][0],
       q[1][1] - q[0][1] + g * q[1][1], q[3][1] - q[0][1] + h * q[3][1], q[0][1], g, h, 1;
  return m;
}

Eigen::Matrix3d adjugate(const Eigen::Matrix3d& m) {
  Eigen::Matrix3d a;
  a(0, 0) = m(1, 1) * m(2, 2) - m(1, 2) * m(2, 1);
  a(0, 1) = m(0, 2) * m(2, 1) - m(0, 1) * m(2, 2);
  a(0, 2) = m(0, 1) * m(1, 2) - m(0, 2) * m(1, 1);
  a(1, 0) = m(1, 2) * m(2, 0) - m(1, 0) * m(2, 2);
  a(1, 1) = m(0, 0) * m(2, 2) - m(0, 2) * m(2, 0);
  a(1, 2) = m(0, 2) * m(1, 0) - m(0, 0) * m(1, 2);
  a(2, 0) = m(1, 0) * m(2, 1) - m(1, 1) * m(2, 0);
  a(2, 1) = m(0, 1) * m(2, 0) - m(0, 0) * m(2, 1);
  a(2, 2) = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
  return a;
}

// Exact homography through four point pairs, composed from two
// square-to-quad maps in normalized coordinates. Needs no three collinear.
bool solve_four(const std::array<Pt, 4>& from, const std::array<Pt, 4>& to, Homography& out) {
  const Eigen::Matrix3d ta = normalizer(from);
  const Eigen::Matrix3d tb = normalizer(to);
  std::array<Pt, 4> na, nb;
  for (int i = 0; i < 4; ++i) {
    na[i] = transform(ta, from[i]);
    nb[i] = transform(tb, to[i]);
  }
  const Eigen::Matrix3d hn = square_to_quad(nb) * adjugate(square_to_quad(na));
  if (std::abs(hn(2, 2)) < 1e-12) return false;
  return finalize(hn / hn(2, 2), ta, tb, out);
}

bool collinear(const Pt& p, const Pt& q, const Pt& r) {
  const double cross = (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]);
  return std::abs(cross) < 1e-6;
}

bool degenerate(const std::array<Pt, 4>& p) {
  return collinear(p[0], p[1], p[2]) || collinear(p[0], p[1], p[3]) ||
         collinear(p[0], p[2], p[3]) || collinear(p[1], p[2], p[3]);
}

}  // namespace

Homography fit_homography(std::span<const Pt> from, std::span<const Pt> to) {
  if (from.size() != to.size() || from.size() < 4) {
    throw Error(ErrorCode::kUnderdetermined, "underdetermined: homography needs >= 4 pairs");
  }
  const Eigen::Matrix3d ta = normalizer(from);
  const Eigen::Matrix3d tb = normalizer(to);
  Eigen::Matrix<double, 9, 9> ata = Eigen::Matrix<double, 9, 9>::Zero();
  for (size_t i = 0; i < from.size(); ++i) {
    const Pt a = transform(ta, from[i]);
    const Pt b = transform(tb, to[i]);
    Eigen::Matrix<double, 9, 1> r1, r2;
    r1 << a[0], a[1], 1, 0, 0, 0, -a[0] * b[0], -a[1] * b[0], -b[0];
    r2 << 0, 0, 0, a[0], a[1], 1, -a[0] * b[1], -a[1] * b[1], -b[1];
    ata.noalias() += r1 * r1.transpose();
    ata.noalias() += r2 * r2.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> es(ata);
  const Eigen::Matrix<double, 9, 1> v = es.eigenvectors().col(0);
  Eigen::Matrix3d hn;
  hn << v(0), v(1), v(2), v(3), v(4), v(5), v(6), v(7), v(8);
  Homography out;
  if (!finalize(hn, ta, tb, out)) {
    throw Error(ErrorCode::kDegenerateGeometry, "degenerate geometry: least-squares fit failed");
  }
  return out;
}

RansacResult estimate_homography_ransac(std::span<const Correspondence> corrs,
                                        std::span<const Keypoint> kp_a,
                                        std::span<const Keypoint> kp_b, const MatchConfig& cfg,
                                        uint64_t seed) {
  cfg.validate();
  const size_t n = corrs.size();
  if (n < 4 || n < static_cast<size_t>(cfg.min_matches_for_ransac)) {
    throw Error(ErrorCode::kUnderdetermined,
                "underdetermined: " + std::to_string(n) + " correspondences");
  }
  std::vector<Pt> pa(n), pb(n);
  for (size_t i = 0; i < n; ++i) {
    if (corrs[i].index_a >= kp_a.size() || corrs[i].index_b >= kp_b.size()) {
      throw Error(ErrorCode::kInvalidArgument, "correspondence index out of range");
    }
    const Keypoint& a = kp_a[corrs[i].index_a];
    const Keypoint& b = kp_b[corrs[i].index_b];
    pa[i] = {a.x, a.y};
    pb[i] = {b.x, b.y};
  }

  const double t2 = cfg.inlier_threshold_px * cfg.inlier_threshold_px;
  std::vector<double> ax(n), ay(n), bx(n), by(n);
  for (size_t i = 0; i < n; ++i) {
    ax[i] = pa[i][0];
    ay[i] = pa[i][1];
    bx[i] = pb[i][0];
    by[i] = pb[i][1];
  }
  // Reprojection test |H a - b| < t without the division:
  // (hx - w bx)^2 + (hy - w by)^2 < t^2 w^2, w > 0.
  auto inlier = [&](const Homography& h, size_t i) {
    const double w = h[6] * ax[i] + h[7] * ay[i] + h[8];
    const double ex = h[0] * ax[i] + h[1] * ay[i] + h[2] - w * bx[i];
    const double ey = h[3] * ax[i] + h[4] * ay[i] + h[5] - w * by[i];
    return w > 1e-12 && ex * ex + ey * ey < t2 * w * w;
  };
  // Stops early once the hypothesis can no longer reach `needed` inliers.
  auto count_inliers = [&](const Homography& h, size_t needed) {
    constexpr size_t kBlock = 16;
    size_t count = 0;
    for (size_t start = 0; start < n; start += kBlock) {
      if (count + (n - start) < needed) break;
      const size_t stop = std::min(n, start + kBlock);
      for (size_t i = start; i < stop; ++i) count += inlier(h, i);
    }
    return count;
  };

  Rng rng(seed);
  const long budget = cfg.ransac_iterations;
  const long max_draws = 10L * budget;
  long iterations = 0, draws = 0;
  bool any_valid = false;
  size_t best_count = 0;
  Homography best{};
  // Sorted quadruples already scored; a repeat cannot beat the first
  // occurrence, so it only consumes its iteration.
  std::vector<uint64_t> seen;
  const bool track_seen = n <= 64;
  // For small sets, count the distinct non-degenerate quadruples; once all
  // were scored the remaining iterations cannot change the outcome.
  size_t distinct_valid = std::numeric_limits<size_t>::max();
  if (n <= 15) {
    distinct_valid = 0;
    for (size_t a = 0; a < n; ++a)
      for (size_t b = a + 1; b < n; ++b)
        for (size_t c = b + 1; c < n; ++c)
          for (size_t d = c + 1; d < n; ++d) {
            const std::array<Pt, 4> from{pa[a], pa[b], pa[c], pa[d]};
            const std::array<Pt, 4> to{pb[a], pb[b], pb[c], pb[d]};
            if (!degenerate(from) && !degenerate(to)) ++distinct_valid;
          }
  }
  if (distinct_valid == 0) {
    throw Error(ErrorCode::kDegenerateGeometry,
                "degenerate geometry: every quadruple is collinear");
  }

  while (iterations < budget && draws < max_draws) {
    ++draws;
    std::array<uint32_t, 4> idx;
    for (int k = 0; k < 4; ++k) {
      bool dup;
      do {
        idx[k] = static_cast<uint32_t>(rng.below(n));
        dup = false;
        for (int q = 0; q < k; ++q) dup |= idx[q] == idx[k];
      } while (dup);
    }
    std::sort(idx.begin(), idx.end());
    std::array<Pt, 4> from, to;
    for (int k = 0; k < 4; ++k) {
      from[k] = pa[idx[k]];
      to[k] = pb[idx[k]];
    }
    if (degenerate(from) || degenerate(to)) continue;
    ++iterations;
    if (track_seen) {
      const uint64_t key = (uint64_t{idx[0]} << 48) | (uint64_t{idx[1]} << 32) |
                           (uint64_t{idx[2]} << 16) | idx[3];
      auto it = std::lower_bound(seen.begin(), seen.end(), key);
      if (it != seen.end() && *it == key) continue;
      seen.insert(it, key);
    }
    const bool exhausted = seen.size() == distinct_valid;
    Homography h;
    if (solve_four(from, to, h)) {
      any_valid = true;
      const size_t count = count_inliers(h, best_count + 1);
      if (count > best_count) {
        best_count = count;
        best = h;
        if (best_count == n) break;
      }
    }
    if (exhausted) break;
  }
  if (!any_valid) {
    throw Error(ErrorCode::kDegenerateGeometry,
                "degenerate geometry: no non-degenerate sample among correspondences");
  }

  RansacResult result;
  for (size_t i = 0; i < n; ++i) {
    if (inlier(best, i)) result.inliers.push_back(static_cast<uint32_t>(i));
  }
  result.homography = best;
  if (result.inliers.size() >= 4) {
    std::vector<Pt> fa, fb;
    for (uint32_t i : result.inliers) {
      fa.push_back(pa[i]);
      fb.push_back(pb[i]);
    }
    try {
      result.homography = fit_homography(fa, fb);
    } catch (const Error&) {
      // keep the minimal-sample hypothesis
    }
  }
  return result;
}

MatchResult match_pair(const FeatureSet& a, const FeatureSet& b, const MatchConfig& cfg,
                       uint64_t seed) {
  cfg.validate();
  MatchResult out;
  out.image_a = a.image_id;
  out.image_b = b.image_id;
  if (a.size() == 0 || b.size() == 0) return out;
  if (a.descriptors.cols != b.descriptors.cols) {
    throw Error(ErrorCode::kInvalidArgument, "descriptor dimension mismatch");
  }

  const auto candidates = match_bruteforce(a.descriptors, b.descriptors);
  std::vector<Correspondence> corr = ratio_test(candidates, cfg.ratio);
  if (cfg.mutual && !corr.empty()) {
    const auto reverse = match_bruteforce(b.descriptors, a.descriptors);
    std::erase_if(corr, [&](const Correspondence& c) {
      return reverse[c.index_b].index_b != c.index_a;
    });
  }
  for (auto& c : corr) {
    c.x_a = a.keypoints[c.index_a].x;
    c.y_a = a.keypoints[c.index_a].y;
    c.x_b = b.keypoints[c.index_b].x;
    c.y_b = b.keypoints[c.index_b].y;
  }

  if (cfg.similarity_mode == SimilarityMode::kRawCount) {
    out.correspondences = std::move(corr);
    out.similarity = static_cast<uint32_t>(out.correspondences.size());
    return out;
  }
  if (corr.size() < static_cast<size_t>(cfg.min_matches_for_ransac)) return out;
  try {
    RansacResult r = estimate_homography_ransac(corr, a.keypoints, b.keypoints, cfg, seed);
    out.correspondences.reserve(r.inliers.size());
    for (uint32_t i : r.inliers) out.correspondences.push_back(corr[i]);
    out.similarity = static_cast<uint32_t>(out.correspondences.size());
    out.verified = true;
    out.homography = r.homography;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUnderdetermined && e.code() != ErrorCode::kDegenerateGeometry) {
      throw;
    }
  }
  return out;
}

MatchResult import_matches(const std::string& path) { return read_match_file(path); }

}  // namespace reid
