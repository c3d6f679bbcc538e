#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reid/model.hpp"

namespace reid {

// 8-bit PNG or JPEG, detected from the leading bytes. Gray stays single
// channel, color becomes RGB; alpha is dropped.
ImageRaster decode_image(const std::vector<uint8_t>& bytes);
ImageRaster read_image(const std::string& path);

// Single-channel PNG where nonzero pixels (>= 128) are foreground.
BinaryMask decode_mask(const std::vector<uint8_t>& bytes);
BinaryMask read_mask(const std::string& path);

std::vector<uint8_t> encode_png(const ImageRaster& raster);
std::vector<uint8_t> encode_png(const BinaryMask& mask);
void write_png(const std::string& path, const ImageRaster& raster);
void write_png(const std::string& path, const BinaryMask& mask);

}  // namespace reid
