#include <gtest/gtest.h>

#include "reid/preprocess.hpp"

namespace reid {
namespace {

ImageRaster ramp(int w, int h, int channels = 1) {
  std::vector<float> px;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) px.push_back((x + 1000.0f * y + 0.25f * c) / 1e6f);
  return ImageRaster(w, h, channels, px);
}

TEST(Rotate, ZeroTurnsIsIdentity) {
  auto r = ramp(5, 3, 3);
  EXPECT_EQ(rotate_quarter_turns(r, 0), r);
}

TEST(Rotate, HalfTurnIsInvolution) {
  auto r = ramp(5, 3, 3);
  EXPECT_EQ(rotate_quarter_turns(rotate_quarter_turns(r, 2), 2), r);
  EXPECT_EQ(rotate_quarter_turns(rotate_quarter_turns(r, 1), 3), r);
}

TEST(Rotate, QuarterTurnHandEnumerated) {
  // 2 wide, 3 high, value 10*y + x; one counterclockwise turn.
  ImageRaster src(2, 3, 1, {0, 0.01f, 0.10f, 0.11f, 0.20f, 0.21f});
  auto out = rotate_quarter_turns(src, 1);
  ASSERT_EQ(out.width(), 3);
  ASSERT_EQ(out.height(), 2);
  // source (x,y) lands at (y, 1 - x)
  EXPECT_EQ(out.at(0, 1), src.at(0, 0));
  EXPECT_EQ(out.at(0, 0), src.at(1, 0));
  EXPECT_EQ(out.at(1, 1), src.at(0, 1));
  EXPECT_EQ(out.at(1, 0), src.at(1, 1));
  EXPECT_EQ(out.at(2, 1), src.at(0, 2));
  EXPECT_EQ(out.at(2, 0), src.at(1, 2));
}

TEST(Rotate, MaskAndBboxFollowRaster) {
  BinaryMask m{6, 4, std::vector<uint8_t>(24, 0)};
  for (int y = 1; y < 3; ++y)
    for (int x = 2; x < 5; ++x) m.bits[y * 6 + x] = 1;
  const PixelRect box{2, 1, 3, 2};
  ASSERT_EQ(mask_bounds(m), box);
  for (int t = 0; t < 4; ++t) {
    EXPECT_EQ(mask_bounds(rotate_quarter_turns(m, t)), rotate_quarter_turns(box, 6, 4, t)) << t;
  }
}

TEST(Mask, AllOnesIsIdentity) {
  auto r = ramp(4, 4, 3);
  EXPECT_EQ(apply_mask(r, BinaryMask{4, 4, std::vector<uint8_t>(16, 1)}, 0.0f), r);
}

TEST(Mask, AllZerosIsBlack) {
  auto r = ramp(4, 4, 3);
  EXPECT_EQ(apply_mask(r, BinaryMask{4, 4, std::vector<uint8_t>(16, 0)}, 0.0f),
            ImageRaster::filled(4, 4, 3, 0.0f));
}

TEST(Mask, Checkerboard) {
  BinaryMask m{4, 4, {}};
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) m.bits.push_back((x + y) % 2 == 0);
  auto out = apply_mask(ImageRaster::filled(4, 4, 1, 0.5f), m, 0.0f);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) EXPECT_EQ(out.at(x, y), (x + y) % 2 == 0 ? 0.5f : 0.0f);
}

TEST(Mask, ShapeMismatch) {
  EXPECT_THROW(apply_mask(ramp(4, 4), BinaryMask{4, 3, std::vector<uint8_t>(12, 1)}, 0), Error);
}

PreprocessConfig crop_config(int target, double zoom) {
  PreprocessConfig c;
  c.target_size = target;
  c.zoom_factor = zoom;
  return c;
}

TEST(Crop, FullFrameNoOp) {
  auto r = ramp(32, 32);
  EXPECT_EQ(crop_zoom_resize(r, {0, 0, 32, 32}, crop_config(32, 1.0)), r);
}

TEST(Crop, ZoomTwoKeepsCentralHalf) {
  auto r = ramp(100, 100);
  auto out = crop_zoom_resize(r, {0, 0, 100, 100}, crop_config(50, 2.0));
  // side 50 centered at 50: output pixel (i,j) samples source (25+i, 25+j)
  EXPECT_EQ(out.at(0, 0), r.at(25, 25));
  EXPECT_EQ(out.at(49, 0), r.at(74, 25));
  EXPECT_EQ(out.at(0, 49), r.at(25, 74));
  EXPECT_EQ(out.at(49, 49), r.at(74, 74));
}

TEST(Crop, NonSquareCentersSquare) {
  auto r = ramp(80, 40);
  auto out = crop_zoom_resize(r, {0, 0, 80, 40}, crop_config(40, 1.0));
  // crop offset (20, 0)
  EXPECT_EQ(out.at(0, 0), r.at(20, 0));
  EXPECT_EQ(out.at(39, 39), r.at(59, 39));
}

TEST(Crop, DegenerateBbox) {
  try {
    crop_zoom_resize(ramp(10, 10), {2, 2, 1, 5}, crop_config(16, 1.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(std::string(e.what()), "bbox too small");
  }
}

TEST(Normalize, Identity) {
  auto r = ramp(3, 2, 3);
  PreprocessConfig c;
  c.normalize_mean = {0, 0, 0};
  c.normalize_std = {1, 1, 1};
  auto t = normalize_pixels(r, c);
  for (int k = 0; k < 3; ++k)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 3; ++x) EXPECT_EQ(t.at(k, y, x), r.at(x, y, k));
}

TEST(Normalize, ConstantAtMeanIsZero) {
  PreprocessConfig c;
  c.normalize_mean = {0.25, 0.25, 0.25};
  auto t = normalize_pixels(ImageRaster::filled(2, 2, 3, 0.25f), c);
  for (float v : t.data) EXPECT_FLOAT_EQ(v, 0.0f);
}

TEST(Normalize, HalfMeanHalfStd) {
  PreprocessConfig c;
  c.normalize_mean = {0.5, 0.5, 0.5};
  c.normalize_std = {0.5, 0.5, 0.5};
  auto t = normalize_pixels(ImageRaster::filled(2, 2, 3, 1.0f), c);
  for (float v : t.data) EXPECT_FLOAT_EQ(v, 1.0f);
}

TEST(Preprocess, Deterministic) {
  auto r = ramp(40, 30, 3);
  auto c = crop_config(16, 2.0);
  EXPECT_EQ(crop_zoom_resize(r, {3, 4, 30, 20}, c), crop_zoom_resize(r, {3, 4, 30, 20}, c));
}

}  // namespace
}  // namespace reid
