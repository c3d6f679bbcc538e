#include <gtest/gtest.h>

#include <cmath>

#include "reid/local_features.hpp"
#include "reid/matcher.hpp"
#include "reid/preprocess.hpp"
#include "reid/synthgen.hpp"

namespace reid {
namespace {

ImageRaster gaussian_blob(int size, double cx, double cy, double sigma) {
  std::vector<float> px(static_cast<size_t>(size) * size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      px[y * size + x] = static_cast<float>(0.1 + 0.8 * std::exp(-d2 / (2 * sigma * sigma)));
    }
  return ImageRaster(size, size, 1, px);
}

ImageRaster textured() {
  auto pattern = generate_identity(11, "T");
  SessionParams s;
  s.deformation_amplitude = 0;
  s.noise_sigma = 0;
  return render_capture(pattern, s, 5, false).capture.raster;
}

TEST(Detector, ConstantRasterHasNoKeypoints) {
  EXPECT_EQ(detect_and_describe(ImageRaster::filled(64, 64, 1, 0.4f), {}).size(), 0u);
}

TEST(Detector, GaussianBlobCenter) {
  auto f = detect_and_describe(gaussian_blob(128, 50, 50, 4), {});
  ASSERT_GE(f.size(), 1u);
  bool near = false;
  for (const auto& kp : f.keypoints) near |= std::hypot(kp.x - 50.0, kp.y - 50.0) <= 2.0;
  EXPECT_TRUE(near);
}

TEST(Detector, TooSmallImage) {
  EXPECT_THROW(detect_and_describe(ImageRaster::filled(4, 4, 1, 0.5f), {}), Error);
}

TEST(Detector, RotationStability) {
  auto img = textured();
  auto a = detect_and_describe(img, {});
  auto b = detect_and_describe(rotate_quarter_turns(img, 1), {});
  ASSERT_GT(a.size(), 20u);
  EXPECT_NEAR(double(b.size()), double(a.size()), 0.1 * a.size());

  // Nearest neighbor of each descriptor lands on the rotated keypoint.
  auto nn = match_bruteforce(a.descriptors, b.descriptors);
  const int w = img.width();
  size_t hits = 0;
  for (const auto& p : nn) {
    const auto& ka = a.keypoints[p.index_a];
    const auto& kb = b.keypoints[p.index_b];
    // CCW turn maps (x, y) to (y, w - 1 - x)
    hits += std::hypot(kb.x - ka.y, kb.y - (w - 1 - ka.x)) < 2.0;
  }
  EXPECT_GE(double(hits) / nn.size(), 0.8);
}

TEST(Detector, Deterministic) {
  auto img = textured();
  EXPECT_EQ(detect_and_describe(img, {}, "x"), detect_and_describe(img, {}, "x"));
}

TEST(Detector, OrderedByResponseAndBudgeted) {
  auto img = textured();
  auto full = detect_and_describe(img, {});
  for (size_t i = 1; i < full.size(); ++i) {
    EXPECT_GE(full.keypoints[i - 1].response, full.keypoints[i].response);
  }
  DetectorConfig c;
  c.max_keypoints = 25;
  auto capped = detect_and_describe(img, c);
  EXPECT_EQ(capped.size(), 25u);
  EXPECT_EQ(capped, truncate_features(full, 25));
  for (const auto& row : {0u, 7u, 24u}) {
    for (float v : capped.descriptors.row(row)) {
      EXPECT_GE(v, 0.0f);
    }
  }
}

TEST(Detector, DescriptorsAreUnitLength) {
  auto f = detect_and_describe(textured(), {});
  ASSERT_EQ(f.descriptors.cols, kDescriptorDim);
  for (size_t i = 0; i < f.size(); ++i) {
    double n = 0;
    for (float v : f.descriptors.row(i)) n += double(v) * v;
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-3);
  }
}

}  // namespace
}  // namespace reid
