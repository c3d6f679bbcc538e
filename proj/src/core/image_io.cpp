#include "reid/image_io.hpp"

#include <png.h>
// jpeglib.h needs size_t and FILE declared first
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>

#include "reid/formats.hpp"

namespace reid {
namespace {

bool is_png(const std::vector<uint8_t>& b) {
  static const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  return b.size() >= 8 && std::memcmp(b.data(), sig, 8) == 0;
}

bool is_jpeg(const std::vector<uint8_t>& b) {
  return b.size() >= 3 && b[0] == 0xFF && b[1] == 0xD8 && b[2] == 0xFF;
}

ImageRaster from_bytes(int w, int h, int c, const std::vector<uint8_t>& px) {
  std::vector<float> values(px.size());
  for (size_t i = 0; i < px.size(); ++i) values[i] = px[i] / 255.0f;
  return ImageRaster(w, h, c, std::move(values));
}

std::vector<uint8_t> decode_png_raw(const std::vector<uint8_t>& bytes, int& w, int& h, int& c,
                                    bool force_gray) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw Error(ErrorCode::kFormat, std::string("format: undecodable png: ") + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0 && !force_gray;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  w = static_cast<int>(image.width);
  h = static_cast<int>(image.height);
  c = color ? 3 : 1;
  std::vector<uint8_t> px(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, px.data(), 0, nullptr)) {
    png_image_free(&image);
    throw Error(ErrorCode::kFormat, std::string("format: undecodable png: ") + image.message);
  }
  return px;
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_fail(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

std::vector<uint8_t> decode_jpeg_raw(const std::vector<uint8_t>& bytes, int& w, int& h, int& c) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_fail;
  std::vector<uint8_t> px;
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    throw Error(ErrorCode::kFormat, std::string("format: undecodable jpeg: ") + err.message);
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
  jpeg_start_decompress(&cinfo);
  w = static_cast<int>(cinfo.output_width);
  h = static_cast<int>(cinfo.output_height);
  c = cinfo.output_components;
  px.resize(static_cast<size_t>(w) * h * c);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = px.data() + static_cast<size_t>(cinfo.output_scanline) * w * c;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return px;
}

std::vector<uint8_t> encode_png_raw(int w, int h, int c, const std::vector<uint8_t>& px) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = c == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, px.data(), 0, nullptr)) {
    throw Error(ErrorCode::kIo, std::string("png encode failed: ") + image.message);
  }
  std::vector<uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, px.data(), 0, nullptr)) {
    throw Error(ErrorCode::kIo, std::string("png encode failed: ") + image.message);
  }
  out.resize(size);
  return out;
}

}  // namespace

ImageRaster decode_image(const std::vector<uint8_t>& bytes) {
  int w = 0, h = 0, c = 0;
  std::vector<uint8_t> px;
  if (is_png(bytes)) {
    px = decode_png_raw(bytes, w, h, c, false);
  } else if (is_jpeg(bytes)) {
    px = decode_jpeg_raw(bytes, w, h, c);
  } else {
    throw Error(ErrorCode::kFormat, "format: not a PNG or JPEG image");
  }
  if (w < 1 || h < 1) throw Error(ErrorCode::kFormat, "format: empty image");
  return from_bytes(w, h, c, px);
}

ImageRaster read_image(const std::string& path) {
  try {
    return decode_image(read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(e.code(), std::string(e.what()) + " (" + path + ")");
  }
}

BinaryMask decode_mask(const std::vector<uint8_t>& bytes) {
  if (!is_png(bytes)) throw Error(ErrorCode::kFormat, "format: mask must be PNG");
  int w = 0, h = 0, c = 0;
  const std::vector<uint8_t> px = decode_png_raw(bytes, w, h, c, true);
  BinaryMask m{w, h, std::vector<uint8_t>(px.size())};
  for (size_t i = 0; i < px.size(); ++i) m.bits[i] = px[i] >= 128 ? 1 : 0;
  return m;
}

BinaryMask read_mask(const std::string& path) {
  try {
    return decode_mask(read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(e.code(), std::string(e.what()) + " (" + path + ")");
  }
}

std::vector<uint8_t> encode_png(const ImageRaster& raster) {
  const auto src = raster.pixels();
  std::vector<uint8_t> px(src.size());
  for (size_t i = 0; i < src.size(); ++i) {
    px[i] = static_cast<uint8_t>(std::lround(std::clamp(src[i], 0.0f, 1.0f) * 255.0f));
  }
  return encode_png_raw(raster.width(), raster.height(), raster.channels(), px);
}

std::vector<uint8_t> encode_png(const BinaryMask& mask) {
  std::vector<uint8_t> px(mask.bits.size());
  for (size_t i = 0; i < px.size(); ++i) px[i] = mask.bits[i] ? 255 : 0;
  return encode_png_raw(mask.width, mask.height, 1, px);
}

void write_png(const std::string& path, const ImageRaster& raster) {
  write_file_atomic(path, encode_png(raster));
}

void write_png(const std::string& path, const BinaryMask& mask) {
  write_file_atomic(path, encode_png(mask));
}

}  // namespace reid
