#pragma once

#include <vector>

#include "reid/model.hpp"

namespace reid {

struct PreprocessConfig {
  int target_size = 440;
  double zoom_factor = 2.0;
  std::vector<double> normalize_mean = {0.485, 0.456, 0.406};
  std::vector<double> normalize_std = {0.229, 0.224, 0.225};
  float mask_fill = 0.0f;

  void validate() const;
};

// Channel-major (CHW) real tensor.
struct PixelTensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<float> data;

  float at(int c, int y, int x) const noexcept {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
};

// Counterclockwise rotation by 90 degrees times turns.
ImageRaster rotate_quarter_turns(const ImageRaster& raster, int turns);
BinaryMask rotate_quarter_turns(const BinaryMask& mask, int turns);
PixelRect rotate_quarter_turns(const PixelRect& rect, int width, int height, int turns);

ImageRaster apply_orientation(const CaptureImage& capture);

// Rotates raster, mask and bbox together; the result has turns == 0.
CaptureImage orient_capture(const CaptureImage& capture);

ImageRaster apply_mask(const ImageRaster& raster, const BinaryMask& mask, float fill);

ImageRaster crop_zoom_resize(const ImageRaster& raster, const PixelRect& bbox,
                             const PreprocessConfig& config);

PixelTensor normalize_pixels(const ImageRaster& raster, const PreprocessConfig& config);

ImageRaster to_grayscale(const ImageRaster& raster);

// Tight bounding box of set mask bits; full frame for an empty mask.
PixelRect mask_bounds(const BinaryMask& mask);

}  // namespace reid
