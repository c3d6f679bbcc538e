#pragma once

#include <string>
#include <vector>

#include "reid/model.hpp"

// Little-endian binary files shared with external feature adapters.
//
// Feature file (.ridf):
//   "RIDF" | version u16 | id_len u16 | id bytes | source u8 | n u32 | d u16 | M u32
//   n x {x, y, scale, orientation, response : f32}
//   n x d f32 descriptors, row-major
//
// Embedding file (.ride):
//   "RIDE" | version u16 | count u32 | D u32
//   count x {id_len u16 | id bytes | D f32}
//
// Match file (.ridm):
//   "RIDM" | version u16 | id_len u16 | id_a | id_len u16 | id_b | n u32
//   n x {idx_a u32, idx_b u32, score f32, x_a f32, y_a f32, x_b f32, y_b f32}
//
// Reader errors: ErrorCode::kFormat ("format: ...") for bad magic, version or
// trailing bytes; ErrorCode::kTruncated ("truncated: ...") when the payload
// is shorter than the declared counts.

namespace reid {

inline constexpr uint16_t kFormatVersion = 1;

std::vector<uint8_t> encode_features(const FeatureSet& features);
FeatureSet decode_features(const std::vector<uint8_t>& bytes);

std::vector<uint8_t> encode_embeddings(const std::vector<Embedding>& embeddings);
std::vector<Embedding> decode_embeddings(const std::vector<uint8_t>& bytes);

std::vector<uint8_t> encode_matches(const MatchResult& match);
MatchResult decode_matches(const std::vector<uint8_t>& bytes);

FeatureSet read_feature_file(const std::string& path);
void write_feature_file(const FeatureSet& features, const std::string& path);

std::vector<Embedding> read_embedding_file(const std::string& path);
void write_embedding_file(const std::vector<Embedding>& embeddings, const std::string& path);

MatchResult read_match_file(const std::string& path);
void write_match_file(const MatchResult& match, const std::string& path);

std::vector<uint8_t> read_file_bytes(const std::string& path);
// Writes to a sibling temp file, then renames over the target.
void write_file_atomic(const std::string& path, const std::vector<uint8_t>& bytes);
void write_file_atomic(const std::string& path, const std::string& text);

}  // namespace reid
