#include "imgproc.hpp"

#include <algorithm>
#include <cmath>

namespace reid::detail {

Plane plane_from_raster(const ImageRaster& gray) {
  Plane p(gray.width(), gray.height());
  const auto px = gray.pixels();
  const int c = gray.channels();
  for (size_t i = 0; i < p.data.size(); ++i) p.data[i] = px[i * c];
  return p;
}

namespace {

inline int reflect101(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

Plane gaussian_blur(const Plane& src, double sigma) {
  if (sigma <= 0) return src;
  const int radius = std::max(1, static_cast<int>(std::ceil(4.0 * sigma)));
  std::vector<float> k(2 * radius + 1);
  double sum = 0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    k[i + radius] = static_cast<float>(v);
    sum += v;
  }
  for (auto& v : k) v = static_cast<float>(v / sum);

  const int w = src.width, h = src.height;
  Plane tmp(w, h), out(w, h);
  std::vector<float> row(w + 2 * radius);
  for (int y = 0; y < h; ++y) {
    const float* s = &src.data[static_cast<size_t>(y) * w];
    for (int x = -radius; x < w + radius; ++x) row[x + radius] = s[reflect101(x, w)];
    float* d = &tmp.data[static_cast<size_t>(y) * w];
    for (int x = 0; x < w; ++x) {
      float acc = 0;
      const float* r = &row[x];
      for (int i = 0; i <= 2 * radius; ++i) acc += k[i] * r[i];
      d[x] = acc;
    }
  }
  // Vertical pass accumulates whole rows so the inner loop vectorizes.
  std::vector<const float*> rows(2 * radius + 1);
  for (int y = 0; y < h; ++y) {
    for (int i = -radius; i <= radius; ++i) {
      rows[i + radius] = &tmp.data[static_cast<size_t>(reflect101(y + i, h)) * w];
    }
    float* d = &out.data[static_cast<size_t>(y) * w];
    std::fill(d, d + w, 0.0f);
    for (int i = 0; i <= 2 * radius; ++i) {
      const float ki = k[i];
      const float* r = rows[i];
      for (int x = 0; x < w; ++x) d[x] += ki * r[x];
    }
  }
  return out;
}

Plane decimate(const Plane& src) {
  Plane out(std::max(1, src.width / 2), std::max(1, src.height / 2));
  for (int y = 0; y < out.height; ++y) {
    const int y0 = std::min(2 * y, src.height - 1), y1 = std::min(2 * y + 1, src.height - 1);
    for (int x = 0; x < out.width; ++x) {
      const int x0 = std::min(2 * x, src.width - 1), x1 = std::min(2 * x + 1, src.width - 1);
      out.at(x, y) = 0.25f * (src.at(x0, y0) + src.at(x1, y0) + src.at(x0, y1) + src.at(x1, y1));
    }
  }
  return out;
}

Plane resize_bilinear(const Plane& src, int width, int height) {
  Plane out(width, height);
  const double sx = static_cast<double>(src.width) / width;
  const double sy = static_cast<double>(src.height) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src.height - 1);
    const double ay = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src.width - 1);
      const double ax = fx - x0;
      const double top = (1 - ax) * src.at(x0, y0) + ax * src.at(x1, y0);
      const double bot = (1 - ax) * src.at(x0, y1) + ax * src.at(x1, y1);
      out.at(x, y) = static_cast<float>((1 - ay) * top + ay * bot);
    }
  }
  return out;
}

}  // namespace reid::detail
