#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <set>

#include "common/fixtures.hpp"
#include "reid/formats.hpp"
#include "reid/local_features.hpp"
#include "reid/manifest.hpp"
#include "reid/matcher.hpp"
#include "reid/pipeline.hpp"
#include "reid/preprocess.hpp"
#include "reid/synthgen.hpp"

namespace reid {
namespace {

TEST(Synth, SameSeedSamePattern) { EXPECT_EQ(generate_identity(5), generate_identity(5)); }

TEST(Synth, HundredSeedsDistinct) {
  std::set<std::vector<std::tuple<double, double, double>>> seen;
  for (uint64_t s = 1; s <= 100; ++s) {
    std::vector<std::tuple<double, double, double>> spots;
    for (const auto& sp : generate_identity(s).spots) spots.emplace_back(sp.x, sp.y, sp.radius);
    seen.insert(spots);
  }
  EXPECT_EQ(seen.size(), 100u);
}

SessionParams still_session() {
  SessionParams s;
  s.deformation_amplitude = 0;
  s.rotation_jitter = s.scale_jitter = s.translation_jitter = 0;
  s.gain_jitter = s.bias_jitter = s.noise_sigma = 0;
  return s;
}

TEST(Synth, NoVariationRendersIdentically) {
  auto p = generate_identity(3, "A");
  auto a = render_capture(p, still_session(), 1, false).capture;
  auto b = render_capture(p, still_session(), 2, false).capture;
  EXPECT_EQ(*a.mask, *b.mask);
  EXPECT_EQ(a.raster, b.raster);
}

TEST(Synth, SmallDeformationIsNearAffine) {
  SessionParams s;
  s.deformation_amplitude = 0.02;
  s.image_size = 512;
  auto p = generate_identity(9);
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    auto r = render_capture(p, s, seed, false);
    // Canonical body points to image; least-squares affine fit.
    std::vector<std::array<double, 2>> uv, xy;
    for (double u = 0.25; u <= 0.75; u += 0.025)
      for (double v = 0.12; v <= 0.88; v += 0.025)
        if (p.body.contains(u, v)) {
          uv.push_back({u, v});
          xy.push_back(r.warp.to_image(u, v));
        }
    Eigen::MatrixXd A(uv.size(), 3);
    Eigen::MatrixXd B(uv.size(), 2);
    for (size_t i = 0; i < uv.size(); ++i) {
      A.row(i) << uv[i][0], uv[i][1], 1;
      B.row(i) << xy[i][0], xy[i][1];
    }
    Eigen::MatrixXd X = A.colPivHouseholderQr().solve(B);
    const double rms = std::sqrt((A * X - B).rowwise().squaredNorm().mean());
    EXPECT_LT(rms, 3.0) << seed;
  }
}

TEST(Synth, WarpRoundTrip) {
  auto r = render_capture(generate_identity(4), SessionParams{}, 8, false);
  for (double u : {0.3, 0.5, 0.7}) {
    auto xy = r.warp.to_image(u, 0.4);
    auto back = r.warp.to_canonical(xy[0], xy[1]);
    EXPECT_NEAR(back[0], u, 1e-9);
    EXPECT_NEAR(back[1], 0.4, 1e-9);
  }
}

TEST(Synth, DifferentIdentitiesMatchWorse) {
  const int n = 20;
  SessionParams s;
  std::vector<FeatureSet> first, second;
  for (int i = 0; i < n; ++i) {
    auto p = generate_identity(100 + i);
    for (int k = 0; k < 2; ++k) {
      auto c = render_capture(p, s, 1000 * i + k).capture;
      c.image_id = "I" + std::to_string(i) + "_" + std::to_string(k);
      (k ? second : first).push_back(extract_local_features(c, DetectorConfig{}));
    }
  }
  Rng rng(1);
  size_t wins = 0;
  const size_t trials = 200;
  for (size_t t = 0; t < trials; ++t) {
    const size_t i = rng.below(n);
    size_t j = rng.below(n - 1);
    j += j >= i;
    const auto same = match_pair(first[i], second[i], MatchConfig{}, t).similarity;
    const auto diff = match_pair(first[i], second[j], MatchConfig{}, t).similarity;
    wins += diff < same;
  }
  EXPECT_GE(double(wins) / trials, 0.99);
}

TEST(Synth, DatasetCounts) {
  auto dir = testing::fresh_dir("synth_counts");
  DatasetSpec spec;
  spec.n_identities = 2;
  spec.sessions_per_identity = 2;
  spec.images_per_session = 1;
  spec.session.image_size = 128;
  auto rows = generate_dataset(spec, dir.string());
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(read_manifest((dir / "manifest.csv").string()), rows);
  std::map<std::string, std::set<std::string>> dates;
  for (const auto& r : rows) {
    dates[r.identity_id].insert(r.capture_date);
    EXPECT_TRUE(std::filesystem::exists(dir / r.image_path));
    EXPECT_TRUE(std::filesystem::exists(dir / r.mask_path));
  }
  for (const auto& [id, d] : dates) EXPECT_EQ(d.size(), 2u);
}

TEST(Synth, AcceptanceShapeArithmetic) {
  const DatasetSpec spec;
  EXPECT_EQ(spec.n_identities * spec.sessions_per_identity * spec.images_per_session, 720);
  std::set<CaptureDate> dates;
  for (int s = 0; s < spec.sessions_per_identity; ++s) dates.insert(synthetic_session_date(s));
  EXPECT_EQ(dates.size(), 4u);
  EXPECT_EQ(synthetic_image_id(0, 0, 0), "F001_s1_01");
}

TEST(Synth, RegenerationIsByteIdentical) {
  DatasetSpec spec;
  spec.n_identities = 3;
  spec.sessions_per_identity = 2;
  spec.images_per_session = 1;
  spec.session.image_size = 128;
  auto a = testing::fresh_dir("synth_regen_a"), b = testing::fresh_dir("synth_regen_b");
  generate_dataset(spec, a.string());
  generate_dataset(spec, b.string());
  EXPECT_EQ(read_file_bytes((a / "manifest.csv").string()), read_file_bytes((b / "manifest.csv").string()));
  EXPECT_EQ(read_file_bytes((a / "images/F002_s2_01.png").string()),
            read_file_bytes((b / "images/F002_s2_01.png").string()));
}

}  // namespace
}  // namespace reid
