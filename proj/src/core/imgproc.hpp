#pragma once

#include <vector>

#include "reid/model.hpp"

namespace reid::detail {

// Single-channel float plane without the [0,1] restriction.
struct Plane {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  Plane() = default;
  Plane(int w, int h, float v = 0.0f)
      : width(w), height(h), data(static_cast<size_t>(w) * h, v) {}

  float& at(int x, int y) noexcept { return data[static_cast<size_t>(y) * width + x]; }
  float at(int x, int y) const noexcept { return data[static_cast<size_t>(y) * width + x]; }
};

Plane plane_from_raster(const ImageRaster& gray);

// Separable Gaussian, reflect-101 borders, kernel radius ceil(4 sigma).
Plane gaussian_blur(const Plane& src, double sigma);

// Halves both axes by averaging 2x2 blocks; pixel centers stay aligned.
Plane decimate(const Plane& src);

// Bilinear resize with half-pixel centers.
Plane resize_bilinear(const Plane& src, int width, int height);

}  // namespace reid::detail
