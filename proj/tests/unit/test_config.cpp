#include <gtest/gtest.h>

#include "reid/config.hpp"

namespace reid {
namespace {

TEST(Config, DefaultsAreValid) {
  AppConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.pipeline.match.ratio, 0.75);
  EXPECT_EQ(c.pipeline.match.ransac_iterations, 2000);
  EXPECT_EQ(c.pipeline.match.inlier_threshold_px, 3.0);
  EXPECT_EQ(c.preprocess.target_size, 440);
  EXPECT_EQ(c.preprocess.zoom_factor, 2.0);
  EXPECT_EQ(c.eval.keypoint_budgets, (std::vector<uint32_t>{1432, 800, 400, 200}));
}

TEST(Config, ParsesSections) {
  auto c = parse_config(R"(
# comment
[match]
ratio = 0.8
similarity_mode = "raw_count"
mutual = true

[pipeline]
k = 50
open_set_threshold = 479  # calibrated

[detector]
max_keypoints = 800

[eval]
k_list = [1, 5, 20]

[service]
token = "s3cret"
)");
  EXPECT_EQ(c.pipeline.match.ratio, 0.8);
  EXPECT_EQ(c.pipeline.match.similarity_mode, SimilarityMode::kRawCount);
  EXPECT_TRUE(c.pipeline.match.mutual);
  EXPECT_EQ(c.pipeline.k, 50u);
  EXPECT_EQ(c.pipeline.open_set_threshold, 479);
  EXPECT_EQ(c.detector.max_keypoints, 800u);
  EXPECT_EQ(c.eval.k_list, (std::vector<size_t>{1, 5, 20}));
  EXPECT_EQ(c.service.token, "s3cret");
}

TEST(Config, FormatRoundTrip) {
  AppConfig c;
  c.set("pipeline.k", "17");
  c.set("detector.max_keypoints", "\"unlimited\"");
  c.set("synth.deformation_amplitude", "0.05");
  c.set("service.host", "\"0.0.0.0\"");
  const std::string text = format_config(c);
  EXPECT_EQ(format_config(parse_config(text)), text);
  EXPECT_EQ(parse_config(text).pipeline.k, 17u);
}

TEST(Config, Errors) {
  AppConfig c;
  EXPECT_THROW(c.set("pipeline.nope", "1"), Error);
  EXPECT_THROW(c.set("pipeline.k", "\"ten\""), Error);
  EXPECT_THROW(parse_config("k = 1\n"), Error);
  EXPECT_THROW(parse_config("[match\nratio = 1\n"), Error);
  c.set("pipeline.k", "0");
  EXPECT_THROW(c.validate(), Error);
}

}  // namespace
}  // namespace reid
