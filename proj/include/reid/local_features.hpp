#pragma once

#include <cstdint>
#include <string>

#include "reid/model.hpp"

namespace reid {

struct DetectorConfig {
  uint32_t max_keypoints = kUnlimitedKeypoints;  // M
  double contrast_threshold = 0.04;
  double edge_threshold = 10.0;
  int n_octaves = 4;
  int scales_per_octave = 3;
  double sigma = 1.6;
  bool upsample = true;  // start the pyramid from a 2x image

  void validate() const;
};

inline constexpr size_t kDescriptorDim = 128;

// Difference-of-Gaussians keypoints with 4x4x8 gradient-histogram
// descriptors. Color input is reduced to luma. Keypoints are ordered by
// descending response and truncated to max_keypoints.
FeatureSet detect_and_describe(const ImageRaster& raster, const DetectorConfig& config,
                               const std::string& image_id = {});

// Keeps the max_keypoints strongest keypoints; equals re-running the
// detector with the smaller budget.
FeatureSet truncate_features(const FeatureSet& features, uint32_t max_keypoints);

// Reads an adapter-produced feature file; the result is tagged imported.
FeatureSet import_features(const std::string& path);

}  // namespace reid
