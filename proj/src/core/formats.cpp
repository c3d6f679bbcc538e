#include "reid/formats.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>

namespace reid {
namespace {

class Writer {
 public:
  void magic(const char* m) { bytes_.insert(bytes_.end(), m, m + 4); }
  void u8(uint8_t v) { bytes_.push_back(v); }
  void u16(uint16_t v) {
    for (int i = 0; i < 2; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<uint32_t>(v)); }
  void str(const std::string& s) {
    if (s.size() > 0xFFFF) throw Error(ErrorCode::kInvalidArgument, "image_id too long");
    u16(static_cast<uint16_t>(s.size()));
    bytes_.insert(bytes_.end(), s.begin(), s.end());
  }
  std::vector<uint8_t> take() { return std::move(bytes_); }

 private:
  std::vector<uint8_t> bytes_;
};

class Reader {
 public:
  Reader(const std::vector<uint8_t>& b, const char* what) : b_(b), what_(what) {}

  void magic(const char* m) {
    need(4);
    if (std::memcmp(b_.data() + pos_, m, 4) != 0) {
      throw Error(ErrorCode::kFormat, std::string("format: bad magic in ") + what_);
    }
    pos_ += 4;
  }
  void version() {
    const uint16_t v = u16();
    if (v != kFormatVersion) {
      throw Error(ErrorCode::kFormat,
                  std::string("format: unsupported version ") + std::to_string(v) + " in " + what_);
    }
  }
  uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(b_[pos_] | (b_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str() {
    const uint16_t n = u16();
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  // Verifies that `count` records of `size` bytes fit before reading them.
  void expect(uint64_t count, uint64_t size) {
    if (count * size > b_.size() - pos_) {
      throw Error(ErrorCode::kTruncated, std::string("truncated: payload shorter than declared in ") + what_);
    }
  }
  void finish() {
    if (pos_ != b_.size()) {
      throw Error(ErrorCode::kFormat, std::string("format: trailing bytes in ") + what_);
    }
  }

 private:
  void need(size_t n) {
    if (b_.size() - pos_ < n) {
      throw Error(ErrorCode::kTruncated, std::string("truncated: unexpected end of ") + what_);
    }
  }

  const std::vector<uint8_t>& b_;
  const char* what_;
  size_t pos_ = 0;
};

}  // namespace

std::vector<uint8_t> encode_features(const FeatureSet& fs) {
  validate_features(fs);
  if (fs.descriptors.cols > 0xFFFF) throw Error(ErrorCode::kInvalidArgument, "descriptor dim too large");
  Writer w;
  w.magic("RIDF");
  w.u16(kFormatVersion);
  w.str(fs.image_id);
  w.u8(static_cast<uint8_t>(fs.source));
  w.u32(static_cast<uint32_t>(fs.size()));
  w.u16(static_cast<uint16_t>(fs.descriptors.cols));
  w.u32(fs.max_keypoints);
  for (const auto& kp : fs.keypoints) {
    w.f32(kp.x);
    w.f32(kp.y);
    w.f32(kp.scale);
    w.f32(kp.orientation);
    w.f32(kp.response);
  }
  for (float v : fs.descriptors.data) w.f32(v);
  return w.take();
}

FeatureSet decode_features(const std::vector<uint8_t>& bytes) {
  Reader r(bytes, "feature file");
  r.magic("RIDF");
  r.version();
  FeatureSet fs;
  fs.image_id = r.str();
  const uint8_t source = r.u8();
  if (source > 1) throw Error(ErrorCode::kFormat, "format: unknown feature source");
  fs.source = static_cast<FeatureSource>(source);
  const uint32_t n = r.u32();
  const uint16_t d = r.u16();
  fs.max_keypoints = r.u32();
  r.expect(n, 5 * 4 + static_cast<uint64_t>(d) * 4);
  fs.keypoints.resize(n);
  for (auto& kp : fs.keypoints) {
    kp.x = r.f32();
    kp.y = r.f32();
    kp.scale = r.f32();
    kp.orientation = r.f32();
    kp.response = r.f32();
  }
  fs.descriptors = DescriptorMatrix(n, d);
  for (auto& v : fs.descriptors.data) v = r.f32();
  r.finish();
  if (n > fs.max_keypoints) throw Error(ErrorCode::kFormat, "format: keypoint count exceeds M");
  return fs;
}

std::vector<uint8_t> encode_embeddings(const std::vector<Embedding>& embeddings) {
  const size_t dim = embeddings.empty() ? 0 : embeddings.front().vector.size();
  Writer w;
  w.magic("RIDE");
  w.u16(kFormatVersion);
  w.u32(static_cast<uint32_t>(embeddings.size()));
  w.u32(static_cast<uint32_t>(dim));
  for (const auto& e : embeddings) {
    if (e.vector.size() != dim) {
      throw Error(ErrorCode::kInvalidArgument, "embedding dimension not uniform");
    }
    w.str(e.image_id);
    for (float v : e.vector) w.f32(v);
  }
  return w.take();
}

std::vector<Embedding> decode_embeddings(const std::vector<uint8_t>& bytes) {
  Reader r(bytes, "embedding file");
  r.magic("RIDE");
  r.version();
  const uint32_t count = r.u32();
  const uint32_t dim = r.u32();
  r.expect(count, 2 + static_cast<uint64_t>(dim) * 4);
  std::vector<Embedding> out(count);
  for (auto& e : out) {
    e.image_id = r.str();
    r.expect(dim, 4);
    e.vector.resize(dim);
    double norm = 0;
    for (auto& v : e.vector) {
      v = r.f32();
      norm += static_cast<double>(v) * v;
    }
    // The file carries no flag; unit rows are treated as normalized.
    e.normalized = dim > 0 && std::abs(std::sqrt(norm) - 1.0) <= 1e-6;
  }
  r.finish();
  return out;
}

std::vector<uint8_t> encode_matches(const MatchResult& m) {
  Writer w;
  w.magic("RIDM");
  w.u16(kFormatVersion);
  w.str(m.image_a);
  w.str(m.image_b);
  w.u32(static_cast<uint32_t>(m.correspondences.size()));
  for (const auto& c : m.correspondences) {
    w.u32(c.index_a);
    w.u32(c.index_b);
    w.f32(c.score);
    w.f32(c.x_a);
    w.f32(c.y_a);
    w.f32(c.x_b);
    w.f32(c.y_b);
  }
  return w.take();
}

MatchResult decode_matches(const std::vector<uint8_t>& bytes) {
  Reader r(bytes, "match file");
  r.magic("RIDM");
  r.version();
  MatchResult m;
  m.image_a = r.str();
  m.image_b = r.str();
  const uint32_t n = r.u32();
  r.expect(n, 7 * 4);
  m.correspondences.resize(n);
  for (auto& c : m.correspondences) {
    c.index_a = r.u32();
    c.index_b = r.u32();
    c.score = r.f32();
    c.x_a = r.f32();
    c.y_a = r.f32();
    c.x_b = r.f32();
    c.y_b = r.f32();
  }
  r.finish();
  m.similarity = n;
  m.verified = false;
  return m;
}

std::vector<uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kNotFound, "missing file: " + path);
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::kIo, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw Error(ErrorCode::kIo, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) throw Error(ErrorCode::kIo, "rename failed for " + path + ": " + ec.message());
}

void write_file_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, std::vector<uint8_t>(text.begin(), text.end()));
}

FeatureSet read_feature_file(const std::string& path) {
  try {
    return decode_features(read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(e.code(), std::string(e.what()) + " (" + path + ")");
  }
}

void write_feature_file(const FeatureSet& fs, const std::string& path) {
  write_file_atomic(path, encode_features(fs));
}

std::vector<Embedding> read_embedding_file(const std::string& path) {
  try {
    return decode_embeddings(read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(e.code(), std::string(e.what()) + " (" + path + ")");
  }
}

void write_embedding_file(const std::vector<Embedding>& e, const std::string& path) {
  write_file_atomic(path, encode_embeddings(e));
}

MatchResult read_match_file(const std::string& path) {
  try {
    return decode_matches(read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(e.code(), std::string(e.what()) + " (" + path + ")");
  }
}

void write_match_file(const MatchResult& m, const std::string& path) {
  write_file_atomic(path, encode_matches(m));
}

}  // namespace reid
