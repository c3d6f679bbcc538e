#include "reid/preprocess.hpp"

#include <algorithm>
#include <cmath>

namespace reid {

void PreprocessConfig::validate() const {
  if (target_size < 16) throw Error(ErrorCode::kInvalidArgument, "target_size must be >= 16");
  if (!(zoom_factor >= 1.0)) throw Error(ErrorCode::kInvalidArgument, "zoom_factor must be >= 1");
  if (normalize_mean.size() != normalize_std.size()) {
    throw Error(ErrorCode::kInvalidArgument, "normalize mean/std arity differ");
  }
  for (double s : normalize_std) {
    if (!(s > 0)) throw Error(ErrorCode::kInvalidArgument, "normalize std must be > 0");
  }
}

namespace {

// Source coordinate feeding output pixel (x, y) after `turns` CCW rotations.
// Output dimensions are (w, h) for even turns and (h, w) for odd.
inline void source_of(int turns, int w, int h, int x, int y, int& sx, int& sy) {
  switch (turns & 3) {
    case 0: sx = x; sy = y; break;
    case 1: sx = w - 1 - y; sy = x; break;
    case 2: sx = w - 1 - x; sy = h - 1 - y; break;
    default: sx = y; sy = h - 1 - x; break;
  }
}

template <typename T, typename Get>
std::vector<T> rotate_plane(int w, int h, int c, int turns, Get get, int& ow, int& oh) {
  ow = (turns & 1) ? h : w;
  oh = (turns & 1) ? w : h;
  std::vector<T> out(static_cast<size_t>(ow) * oh * c);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      int sx, sy;
      source_of(turns, w, h, x, y, sx, sy);
      for (int k = 0; k < c; ++k) {
        out[(static_cast<size_t>(y) * ow + x) * c + k] = get(sx, sy, k);
      }
    }
  }
  return out;
}

}  // namespace

ImageRaster rotate_quarter_turns(const ImageRaster& r, int turns) {
  turns = ((turns % 4) + 4) % 4;
  if (turns == 0) return r;
  int ow, oh;
  auto px = rotate_plane<float>(r.width(), r.height(), r.channels(), turns,
                                [&](int x, int y, int k) { return r.at(x, y, k); }, ow, oh);
  return ImageRaster(ow, oh, r.channels(), std::move(px));
}

BinaryMask rotate_quarter_turns(const BinaryMask& m, int turns) {
  turns = ((turns % 4) + 4) % 4;
  if (turns == 0) return m;
  BinaryMask out;
  out.bits = rotate_plane<uint8_t>(m.width, m.height, 1, turns,
                                   [&](int x, int y, int) { return m.bits[static_cast<size_t>(y) * m.width + x]; },
                                   out.width, out.height);
  return out;
}

PixelRect rotate_quarter_turns(const PixelRect& r, int w, int h, int turns) {
  turns = ((turns % 4) + 4) % 4;
  PixelRect cur = r;
  for (int t = 0; t < turns; ++t) {
    // One CCW turn: (x, y) -> (y, w - 1 - x); image becomes h x w.
    PixelRect next;
    next.x = cur.y;
    next.y = w - (cur.x + cur.width);
    next.width = cur.height;
    next.height = cur.width;
    cur = next;
    std::swap(w, h);
  }
  return cur;
}

ImageRaster apply_orientation(const CaptureImage& capture) {
  if (capture.rotation_quarter_turns < 0 || capture.rotation_quarter_turns > 3) {
    throw Error(ErrorCode::kInvalidArgument, "rotation_quarter_turns must be 0..3");
  }
  return rotate_quarter_turns(capture.raster, capture.rotation_quarter_turns);
}

CaptureImage orient_capture(const CaptureImage& c) {
  validate_capture(c);
  const int turns = c.rotation_quarter_turns;
  CaptureImage out{c.image_id, c.identity_id, c.capture_date, 0, std::nullopt, std::nullopt,
                   apply_orientation(c)};
  if (c.mask) out.mask = rotate_quarter_turns(*c.mask, turns);
  if (c.bbox) out.bbox = rotate_quarter_turns(*c.bbox, c.raster.width(), c.raster.height(), turns);
  return out;
}

ImageRaster apply_mask(const ImageRaster& r, const BinaryMask& m, float fill) {
  if (m.width != r.width() || m.height != r.height() ||
      m.bits.size() != static_cast<size_t>(r.width()) * r.height()) {
    throw Error(ErrorCode::kInvalidArgument, "mask shape");
  }
  std::vector<float> px(r.pixels().begin(), r.pixels().end());
  const int c = r.channels();
  for (size_t i = 0; i < m.bits.size(); ++i) {
    if (!m.bits[i]) {
      for (int k = 0; k < c; ++k) px[i * c + k] = fill;
    }
  }
  return ImageRaster(r.width(), r.height(), c, std::move(px));
}

ImageRaster crop_zoom_resize(const ImageRaster& r, const PixelRect& bbox,
                             const PreprocessConfig& config) {
  config.validate();
  if (bbox.width < 2 || bbox.height < 2) {
    throw Error(ErrorCode::kInvalidArgument, "bbox too small");
  }
  if (bbox.x < 0 || bbox.y < 0 || bbox.x + bbox.width > r.width() ||
      bbox.y + bbox.height > r.height()) {
    throw Error(ErrorCode::kInvalidArgument, "bbox outside raster");
  }
  // Zoom first: keep the central bbox/zoom region, then its centered square.
  const double cx = bbox.x + 0.5 * bbox.width;
  const double cy = bbox.y + 0.5 * bbox.height;
  const double side = std::min(bbox.width, bbox.height) / config.zoom_factor;
  const double x0 = cx - 0.5 * side;
  const double y0 = cy - 0.5 * side;
  const int t = config.target_size;
  const double step = side / t;
  const int c = r.channels();

  // Half-pixel centers; samples clamp to the bbox edge.
  auto sample = [&](double u, double v, int k) {
    const double fx = std::clamp(u - 0.5, static_cast<double>(bbox.x),
                                 static_cast<double>(bbox.x + bbox.width - 1));
    const double fy = std::clamp(v - 0.5, static_cast<double>(bbox.y),
                                 static_cast<double>(bbox.y + bbox.height - 1));
    const int ix = static_cast<int>(std::floor(fx));
    const int iy = static_cast<int>(std::floor(fy));
    const int ix1 = std::min(ix + 1, bbox.x + bbox.width - 1);
    const int iy1 = std::min(iy + 1, bbox.y + bbox.height - 1);
    const double ax = fx - ix;
    const double ay = fy - iy;
    const double top = (1 - ax) * r.at(ix, iy, k) + ax * r.at(ix1, iy, k);
    const double bot = (1 - ax) * r.at(ix, iy1, k) + ax * r.at(ix1, iy1, k);
    return (1 - ay) * top + ay * bot;
  };

  std::vector<float> px(static_cast<size_t>(t) * t * c);
  for (int y = 0; y < t; ++y) {
    const double v = y0 + (y + 0.5) * step;
    for (int x = 0; x < t; ++x) {
      const double u = x0 + (x + 0.5) * step;
      for (int k = 0; k < c; ++k) {
        px[(static_cast<size_t>(y) * t + x) * c + k] =
            static_cast<float>(std::clamp(sample(u, v, k), 0.0, 1.0));
      }
    }
  }
  return ImageRaster(t, t, c, std::move(px));
}

PixelTensor normalize_pixels(const ImageRaster& r, const PreprocessConfig& config) {
  const int c = r.channels();
  if (config.normalize_mean.size() != static_cast<size_t>(c) ||
      config.normalize_std.size() != static_cast<size_t>(c)) {
    throw Error(ErrorCode::kInvalidArgument,
                "normalize mean/std arity does not match raster channels");
  }
  PixelTensor t{c, r.height(), r.width(),
                std::vector<float>(static_cast<size_t>(c) * r.height() * r.width())};
  for (int k = 0; k < c; ++k) {
    const double mean = config.normalize_mean[k];
    const double std = config.normalize_std[k];
    for (int y = 0; y < r.height(); ++y) {
      for (int x = 0; x < r.width(); ++x) {
        t.data[(static_cast<size_t>(k) * r.height() + y) * r.width() + x] =
            static_cast<float>((r.at(x, y, k) - mean) / std);
      }
    }
  }
  return t;
}

ImageRaster to_grayscale(const ImageRaster& r) {
  if (r.channels() == 1) return r;
  std::vector<float> px(static_cast<size_t>(r.width()) * r.height());
  for (int y = 0; y < r.height(); ++y) {
    for (int x = 0; x < r.width(); ++x) {
      const float v = 0.299f * r.at(x, y, 0) + 0.587f * r.at(x, y, 1) + 0.114f * r.at(x, y, 2);
      px[static_cast<size_t>(y) * r.width() + x] = std::clamp(v, 0.0f, 1.0f);
    }
  }
  return ImageRaster(r.width(), r.height(), 1, std::move(px));
}

PixelRect mask_bounds(const BinaryMask& m) {
  int x0 = m.width, y0 = m.height, x1 = -1, y1 = -1;
  for (int y = 0; y < m.height; ++y) {
    for (int x = 0; x < m.width; ++x) {
      if (m.at(x, y)) {
        x0 = std::min(x0, x);
        y0 = std::min(y0, y);
        x1 = std::max(x1, x);
        y1 = std::max(y1, y);
      }
    }
  }
  if (x1 < 0) return {0, 0, m.width, m.height};
  return {x0, y0, x1 - x0 + 1, y1 - y0 + 1};
}

}  // namespace reid
