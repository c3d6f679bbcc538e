#include <gtest/gtest.h>

#include <set>

#include "common/fixtures.hpp"
#include "reid/model.hpp"

namespace reid {
namespace {

using testing::record;

Gallery labeled_gallery(size_t n) {
  Gallery g;
  for (size_t i = 0; i < n; ++i) {
    const std::string id = "img" + std::to_string(i);
    const std::string identity = "ID" + std::to_string(i % 3);
    GalleryEntry e{record(id, identity, i % 2 ? "2015-03-02" : "2015-03-01"), nullptr, nullptr};
    g.identities[identity][id] = e.capture.capture_date;
    g.entries.emplace(id, std::move(e));
  }
  return g;
}

size_t count_rule(const std::vector<Violation>& vs, const std::string& rule) {
  size_t n = 0;
  for (const auto& v : vs) n += v.rule == rule;
  return n;
}

TEST(ValidateGallery, EmptyIsValid) { EXPECT_TRUE(validate_gallery(Gallery{}).empty()); }

TEST(ValidateGallery, DanglingImage) {
  Gallery g = labeled_gallery(4);
  g.identities["ID0"]["ghost"] = CaptureDate::parse("2015-03-01");
  auto vs = validate_gallery(g);
  ASSERT_EQ(vs.size(), 1u);
  EXPECT_EQ(vs[0].rule, "dangling image_id");
}

TEST(ValidateGallery, OverlapMatchesIntersectionScan) {
  Gallery g = labeled_gallery(10);
  g.identities["ID1"]["img3"] = g.entries.at("img3").capture.capture_date;  // img3 belongs to ID0

  // Oracle: pairwise intersection of identity image sets.
  std::set<std::string> shared;
  for (auto a = g.identities.begin(); a != g.identities.end(); ++a) {
    for (auto b = std::next(a); b != g.identities.end(); ++b) {
      for (const auto& [id, date] : a->second) {
        if (b->second.contains(id)) shared.insert(id);
      }
    }
  }
  ASSERT_EQ(shared, std::set<std::string>{"img3"});

  auto vs = validate_gallery(g);
  EXPECT_EQ(vs.size(), 1u);
  EXPECT_EQ(count_rule(vs, "identity overlap"), shared.size());
  EXPECT_EQ(vs[0].entity, "image img3");
}

TEST(ValidateGallery, StructuralRules) {
  Gallery g = labeled_gallery(3);
  g.entries.at("img1").capture.capture_date = CaptureDate::parse("2016-01-01");
  g.entries.at("img2").capture.identity_id.reset();
  g.decision_log.resize(2);
  g.decision_log[0].sequence = 2;
  g.decision_log[1].sequence = 1;
  auto vs = validate_gallery(g);
  EXPECT_EQ(count_rule(vs, "date mismatch"), 1u);
  EXPECT_EQ(count_rule(vs, "unlabeled entry"), 1u);
  EXPECT_EQ(count_rule(vs, "decision log order"), 1u);
}

TEST(CaptureDate, IsoRoundTrip) {
  for (const char* s : {"1970-01-01", "2014-04-01", "2024-02-29", "1999-12-31"}) {
    EXPECT_EQ(CaptureDate::parse(s).iso(), s);
  }
  EXPECT_EQ(CaptureDate::parse("1970-01-02").days(), 1);
  EXPECT_LT(CaptureDate::parse("2014-04-01"), CaptureDate::parse("2014-04-02"));
}

TEST(CaptureDate, RejectsMalformed) {
  for (const char* s : {"2014-13-01", "2014-02-30", "20140401", "2014-04-01x", ""}) {
    EXPECT_THROW(CaptureDate::parse(s), Error) << s;
  }
}

TEST(ValidateCapture, MaskShape) {
  CaptureImage c{"x", "A", {}, 0, BinaryMask{3, 3, std::vector<uint8_t>(9, 1)}, std::nullopt,
                 ImageRaster::filled(4, 3, 1, 0.5f)};
  try {
    validate_capture(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()), "mask shape");
  }
  c.mask = BinaryMask{4, 3, std::vector<uint8_t>(12, 1)};
  EXPECT_NO_THROW(validate_capture(c));
  c.rotation_quarter_turns = 4;
  EXPECT_THROW(validate_capture(c), Error);
}

TEST(ValidateFeatures, BudgetAndShape) {
  auto f = *testing::random_features("a", 5, 1);
  EXPECT_NO_THROW(validate_features(f));
  f.max_keypoints = 4;
  EXPECT_THROW(validate_features(f), Error);
  f.max_keypoints = kUnlimitedKeypoints;
  f.descriptors.data.pop_back();
  EXPECT_THROW(validate_features(f), Error);
}

TEST(DecisionAction, NamesRoundTrip) {
  for (auto a : {DecisionAction::kAccept, DecisionAction::kRejectAllNew, DecisionAction::kDefer,
                 DecisionAction::kAppend}) {
    EXPECT_EQ(parse_decision_action(to_string(a)), a);
  }
  EXPECT_THROW(parse_decision_action("maybe"), Error);
}

}  // namespace
}  // namespace reid
