#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "common/fixtures.hpp"
#include "reid/matcher.hpp"

namespace reid {
namespace {

// Naive two-nearest-neighbor oracle.
std::vector<NeighborPair> oracle_nn(const DescriptorMatrix& a, const DescriptorMatrix& b) {
  std::vector<NeighborPair> out;
  for (size_t i = 0; i < a.rows; ++i) {
    double best = std::numeric_limits<double>::infinity(), second = best;
    size_t arg = 0;
    for (size_t j = 0; j < b.rows; ++j) {
      double s = 0;
      for (size_t k = 0; k < a.cols; ++k) {
        const double d = double(a.row(i)[k]) - double(b.row(j)[k]);
        s += d * d;
      }
      const double d = std::sqrt(s);
      if (d < best) {
        second = best;
        best = d;
        arg = j;
      } else if (d < second) {
        second = d;
      }
    }
    out.push_back({uint32_t(i), uint32_t(arg), best, second});
  }
  return out;
}

void expect_same(const std::vector<NeighborPair>& got, const std::vector<NeighborPair>& want) {
  ASSERT_EQ(got.size(), want.size());
  for (size_t i = 0; i < got.size(); ++i) {
    EXPECT_EQ(got[i].index_a, want[i].index_a);
    EXPECT_EQ(got[i].index_b, want[i].index_b);
    EXPECT_NEAR(got[i].d1, want[i].d1, 1e-9);
    if (std::isinf(want[i].d2)) {
      EXPECT_TRUE(std::isinf(got[i].d2));
    } else {
      EXPECT_NEAR(got[i].d2, want[i].d2, 1e-9);
    }
  }
}

TEST(BruteForce, HandComputedTwoByTwo) {
  DescriptorMatrix a(2, 2), b(2, 2);
  a.data = {0, 0, 3, 4};
  b.data = {0, 1, 6, 8};
  auto got = match_bruteforce(a, b);
  // row 0: distances 1, 10; row 1: sqrt(9+9)=4.2426..., 5
  ASSERT_EQ(got.size(), 2u);
  EXPECT_EQ(got[0].index_b, 0u);
  EXPECT_NEAR(got[0].d1, 1.0, 1e-12);
  EXPECT_NEAR(got[0].d2, 10.0, 1e-12);
  EXPECT_EQ(got[1].index_b, 0u);
  EXPECT_NEAR(got[1].d1, std::sqrt(18.0), 1e-12);
  EXPECT_NEAR(got[1].d2, 5.0, 1e-12);
}

TEST(BruteForce, RandomThreeByFourMatchesOracle) {
  Rng rng(3);
  auto a = testing::random_descriptors(rng, 3, 2);
  auto b = testing::random_descriptors(rng, 4, 2);
  expect_same(match_bruteforce(a, b), oracle_nn(a, b));
}

TEST(BruteForce, RandomSetsMatchOracle) {
  Rng rng(17);
  for (int t = 0; t < 10; ++t) {
    auto a = testing::random_descriptors(rng, 1 + rng.below(60), 128);
    auto b = testing::random_descriptors(rng, 1 + rng.below(60), 128);
    expect_same(match_bruteforce(a, b), oracle_nn(a, b));
  }
}

TEST(BruteForce, SelfMatchOrthonormal) {
  DescriptorMatrix m(4, 4);
  for (size_t i = 0; i < 4; ++i) m.data[i * 4 + i] = 1;
  for (const auto& p : match_bruteforce(m, m)) {
    EXPECT_EQ(p.index_a, p.index_b);
    EXPECT_EQ(p.d1, 0.0);
  }
}

TEST(BruteForce, SingleGalleryRow) {
  Rng rng(1);
  auto a = testing::random_descriptors(rng, 5, 8);
  auto b = testing::random_descriptors(rng, 1, 8);
  for (const auto& p : match_bruteforce(a, b)) EXPECT_TRUE(std::isinf(p.d2));
}

TEST(BruteForce, TiesGoToLowerIndex) {
  DescriptorMatrix a(1, 2), b(3, 2);
  a.data = {0, 0};
  b.data = {5, 5, 1, 0, 0, 1};
  auto p = match_bruteforce(a, b).at(0);
  EXPECT_EQ(p.index_b, 1u);
  EXPECT_EQ(p.d1, 1.0);
  EXPECT_EQ(p.d2, 1.0);
}

TEST(BruteForce, DimensionMismatch) {
  EXPECT_THROW(match_bruteforce(DescriptorMatrix(2, 3), DescriptorMatrix(2, 4)), Error);
}

TEST(RatioTest, Boundaries) {
  std::vector<NeighborPair> zero = {{0, 0, 0.0, 1.0}};
  EXPECT_EQ(ratio_test(zero, 0.01).size(), 1u);
  std::vector<NeighborPair> tie = {{0, 0, 2.0, 2.0}};
  EXPECT_TRUE(ratio_test(tie, 0.99).empty());
}

TEST(RatioTest, FiveCandidateFixture) {
  std::vector<NeighborPair> c = {
      {0, 3, 1.0, 2.0},   // 0.5
      {1, 1, 3.0, 4.0},   // 0.75 rejected
      {2, 0, 2.9, 4.0},   // 0.725
      {3, 2, 9.0, 10.0},  // 0.9
      {4, 3, 0.1, std::numeric_limits<double>::infinity()}};
  auto kept = ratio_test(c, 0.75);
  std::vector<uint32_t> ids;
  for (const auto& k : kept) ids.push_back(k.index_a);
  EXPECT_EQ(ids, (std::vector<uint32_t>{0, 2, 4}));
  EXPECT_FLOAT_EQ(kept[0].score, 0.5f);
  EXPECT_FLOAT_EQ(kept[2].score, 1.0f);
}

struct Planted {
  std::vector<Keypoint> ka, kb;
  std::vector<Correspondence> corr;
};

Planted plant(const Homography& h, size_t inliers, size_t outliers, Rng& rng) {
  Planted p;
  for (size_t i = 0; i < inliers + outliers; ++i) {
    const double x = rng.uniform(0, 400), y = rng.uniform(0, 400);
    auto [u, v] = apply_homography(h, x, y);
    if (i >= inliers) {
      u = rng.uniform(0, 400);
      v = rng.uniform(0, 400);
    }
    p.ka.push_back({float(x), float(y), 1, 0, 1});
    p.kb.push_back({float(u), float(v), 1, 0, 1});
    p.corr.push_back({uint32_t(i), uint32_t(i), 1, float(x), float(y), float(u), float(v)});
  }
  return p;
}

TEST(Ransac, IdentityTransform) {
  Rng rng(5);
  const Homography id = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  auto p = plant(id, 30, 0, rng);
  auto r = estimate_homography_ransac(p.corr, p.ka, p.kb, MatchConfig{}, 1);
  EXPECT_EQ(r.inliers.size(), 30u);
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(r.homography[i], id[i], 1e-6);
}

TEST(Ransac, PlantedAffineWithOutliers) {
  Rng rng(8);
  const Homography h = {0.9, -0.2, 30, 0.25, 1.1, -12, 0, 0, 1};
  auto p = plant(h, 40, 20, rng);
  auto r = estimate_homography_ransac(p.corr, p.ka, p.kb, MatchConfig{}, 77);
  size_t planted = 0, extra = 0;
  for (auto i : r.inliers) (i < 40 ? planted : extra)++;
  EXPECT_EQ(planted, 40u);
  EXPECT_LE(extra, 2u);
}

TEST(Ransac, Underdetermined) {
  Rng rng(1);
  auto p = plant({1, 0, 0, 0, 1, 0, 0, 0, 1}, 3, 0, rng);
  try {
    estimate_homography_ransac(p.corr, p.ka, p.kb, MatchConfig{}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnderdetermined);
  }
}

TEST(Ransac, CollinearIsDegenerate) {
  std::vector<Keypoint> ka, kb;
  std::vector<Correspondence> corr;
  for (uint32_t i = 0; i < 8; ++i) {
    ka.push_back({float(i), float(2 * i), 1, 0, 1});
    kb.push_back({float(i), float(2 * i), 1, 0, 1});
    corr.push_back({i, i, 1, float(i), float(2 * i), float(i), float(2 * i)});
  }
  try {
    estimate_homography_ransac(corr, ka, kb, MatchConfig{}, 1);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDegenerateGeometry);
  }
}

TEST(FitHomography, ExactOnFourPoints) {
  const Homography h = {1.2, 0.1, 5, -0.05, 0.95, 3, 1e-4, 2e-4, 1};
  std::vector<std::array<double, 2>> from = {{0, 0}, {100, 0}, {0, 100}, {100, 100}, {50, 20}};
  std::vector<std::array<double, 2>> to;
  for (auto [x, y] : from) to.push_back(apply_homography(h, x, y));
  auto fit = fit_homography(from, to);
  for (int i = 0; i < 9; ++i) EXPECT_NEAR(fit[i], h[i], 1e-6);
}

FeatureSet warped_copy(const FeatureSet& f, const Homography& h) {
  FeatureSet g = f;
  g.image_id = f.image_id + "_w";
  for (auto& kp : g.keypoints) {
    auto [u, v] = apply_homography(h, kp.x, kp.y);
    kp.x = float(u);
    kp.y = float(v);
  }
  return g;
}

TEST(MatchPair, SelfMatchIsKeypointCount) {
  auto f = *testing::random_features("a", 80, 4);
  MatchConfig raw;
  raw.similarity_mode = SimilarityMode::kRawCount;
  EXPECT_EQ(match_pair(f, f, raw, 1).similarity, 80u);
  EXPECT_EQ(match_pair(f, f, MatchConfig{}, 1).similarity, 80u);
}

TEST(MatchPair, OrthogonalDescriptors) {
  FeatureSet a = *testing::random_features("a", 4, 1), b = *testing::random_features("b", 4, 2);
  a.descriptors = DescriptorMatrix(4, 128);
  b.descriptors = DescriptorMatrix(4, 128);
  for (size_t i = 0; i < 4; ++i) {
    a.descriptors.data[i * 128 + i] = 1;
    b.descriptors.data[i * 128 + 64 + i] = 1;
  }
  EXPECT_EQ(match_pair(a, b, MatchConfig{}, 1).similarity, 0u);
}

TEST(MatchPair, PlantedHomographyCount) {
  auto f = *testing::random_features("a", 120, 6);
  auto g = warped_copy(f, {1.05, 0.1, 10, -0.1, 0.98, 4, 0, 0, 1});
  auto m = match_pair(f, g, MatchConfig{}, 3);
  EXPECT_TRUE(m.verified);
  EXPECT_NEAR(double(m.similarity), 120.0, 12.0);
}

TEST(MatchPair, TooFewForRansac) {
  auto f = *testing::random_features("a", 3, 6);
  auto m = match_pair(f, f, MatchConfig{}, 1);
  EXPECT_EQ(m.similarity, 0u);
  EXPECT_FALSE(m.verified);
}

TEST(MatchPair, SeededDeterminism) {
  auto f = *testing::random_features("a", 100, 1);
  auto g = *testing::random_features("b", 100, 2);
  g.descriptors = f.descriptors;
  for (size_t i = 0; i < 40; ++i) g.keypoints[i] = f.keypoints[i];
  EXPECT_EQ(match_pair(f, g, MatchConfig{}, 99), match_pair(f, g, MatchConfig{}, 99));
}

TEST(SimilarityMode, Names) {
  EXPECT_EQ(parse_similarity_mode("raw_count"), SimilarityMode::kRawCount);
  EXPECT_EQ(to_string(SimilarityMode::kRansacInlierCount), "ransac_inlier_count");
  EXPECT_THROW(parse_similarity_mode("x"), Error);
}

}  // namespace
}  // namespace reid
