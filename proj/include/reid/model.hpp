#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace reid {

enum class ErrorCode {
  kInvalidArgument = 1,
  kFormat,
  kTruncated,
  kIo,
  kNotFound,
  kConflict,
  kUnderdetermined,
  kDegenerateGeometry,
  kInfeasible,
  kDomain,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Row-major pixels, values in [0,1], channel-interleaved.
class ImageRaster {
 public:
  ImageRaster(int width, int height, int channels, std::vector<float> pixels);

  static ImageRaster filled(int width, int height, int channels, float value);

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  int channels() const noexcept { return channels_; }

  float at(int x, int y, int c = 0) const noexcept {
    return pixels_[(static_cast<size_t>(y) * width_ + x) * channels_ + c];
  }
  std::span<const float> pixels() const noexcept { return pixels_; }

  bool operator==(const ImageRaster&) const = default;

 private:
  int width_;
  int height_;
  int channels_;
  std::vector<float> pixels_;
};

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> bits;  // 0 or 1, row-major

  bool at(int x, int y) const noexcept {
    return bits[static_cast<size_t>(y) * width + x] != 0;
  }
  bool operator==(const BinaryMask&) const = default;
};

struct PixelRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  bool operator==(const PixelRect&) const = default;
};

// Calendar date without time of day, stored as days since 1970-01-01.
class CaptureDate {
 public:
  constexpr CaptureDate() = default;
  constexpr explicit CaptureDate(int32_t days) : days_(days) {}

  static CaptureDate from_ymd(int year, unsigned month, unsigned day);
  // Accepts "YYYY-MM-DD".
  static CaptureDate parse(const std::string& text);

  std::string iso() const;
  constexpr int32_t days() const noexcept { return days_; }

  auto operator<=>(const CaptureDate&) const = default;

 private:
  int32_t days_ = 0;
};

struct CaptureImage {
  std::string image_id;
  std::optional<std::string> identity_id;  // absent for unlabeled queries
  CaptureDate capture_date;
  int rotation_quarter_turns = 0;
  std::optional<BinaryMask> mask;
  std::optional<PixelRect> bbox;
  ImageRaster raster;
};

// Throws Error(kInvalidArgument) on violated structural invariants.
void validate_capture(const CaptureImage& capture);

struct Keypoint {
  float x = 0;
  float y = 0;
  float scale = 1;
  float orientation = 0;
  float response = 0;

  bool operator==(const Keypoint&) const = default;
};

enum class FeatureSource : uint8_t { kClassical = 0, kImported = 1 };

struct DescriptorMatrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<float> data;

  DescriptorMatrix() = default;
  DescriptorMatrix(size_t r, size_t c) : rows(r), cols(c), data(r * c, 0.0f) {}

  std::span<const float> row(size_t i) const noexcept {
    return {data.data() + i * cols, cols};
  }
  std::span<float> row(size_t i) noexcept { return {data.data() + i * cols, cols}; }

  bool operator==(const DescriptorMatrix&) const = default;
};

inline constexpr uint32_t kUnlimitedKeypoints = 0xFFFFFFFFu;

struct FeatureSet {
  std::string image_id;
  FeatureSource source = FeatureSource::kClassical;
  std::vector<Keypoint> keypoints;
  DescriptorMatrix descriptors;
  uint32_t max_keypoints = kUnlimitedKeypoints;

  size_t size() const noexcept { return keypoints.size(); }
  bool operator==(const FeatureSet&) const = default;
};

void validate_features(const FeatureSet& features);

struct Embedding {
  std::string image_id;
  std::vector<float> vector;
  bool normalized = false;

  bool operator==(const Embedding&) const = default;
};

struct Correspondence {
  uint32_t index_a = 0;
  uint32_t index_b = 0;
  float score = 0;
  float x_a = 0, y_a = 0, x_b = 0, y_b = 0;

  bool operator==(const Correspondence&) const = default;
};

using Homography = std::array<double, 9>;  // row-major

struct MatchResult {
  std::string image_a;
  std::string image_b;
  std::vector<Correspondence> correspondences;
  uint32_t similarity = 0;
  bool verified = false;
  std::optional<Homography> homography;

  bool operator==(const MatchResult&) const = default;
};

// Metadata retained by the gallery for one capture; rasters stay on disk.
struct CaptureRecord {
  std::string image_id;
  std::optional<std::string> identity_id;
  CaptureDate capture_date;
  int rotation_quarter_turns = 0;
  std::string image_path;
  std::string mask_path;

  bool operator==(const CaptureRecord&) const = default;
};

struct GalleryEntry {
  CaptureRecord capture;
  std::shared_ptr<const FeatureSet> features;
  std::shared_ptr<const Embedding> embedding;
};

enum class DecisionAction { kAccept, kRejectAllNew, kDefer, kAppend };

std::string to_string(DecisionAction action);
DecisionAction parse_decision_action(const std::string& text);

struct DecisionRecord {
  uint64_t sequence = 0;
  std::string query_id;
  DecisionAction action = DecisionAction::kAppend;
  std::optional<std::string> identity_id;
  bool new_identity = false;
  std::vector<std::string> image_ids;
  std::string reviewer;
  std::string timestamp;

  bool operator==(const DecisionRecord&) const = default;
};

struct Gallery {
  std::map<std::string, GalleryEntry> entries;
  // identity_id -> (image_id -> capture date)
  std::map<std::string, std::map<std::string, CaptureDate>> identities;
  std::vector<DecisionRecord> decision_log;

  size_t size() const noexcept { return entries.size(); }
  const GalleryEntry* find(const std::string& image_id) const;
};

struct Violation {
  std::string entity;
  std::string rule;
  std::string detail;
};

std::vector<Violation> validate_gallery(const Gallery& gallery);

struct Stage1Entry {
  std::string image_id;
  double score = 0;

  bool operator==(const Stage1Entry&) const = default;
};

struct PooledCandidate {
  std::string image_id;
  std::string identity_id;
  double score = 0;     // match similarity when scored
  bool scored = false;  // false: outside every shortlist, display only
  std::optional<double> stage1_score;  // best cosine over the queries

  bool operator==(const PooledCandidate&) const = default;
};

struct Decision {
  enum class Kind { kMatch, kNewIndividual };
  Kind kind = Kind::kNewIndividual;
  std::optional<std::string> identity_id;
  std::optional<std::string> image_id;
  double score = 0;

  bool is_match() const noexcept { return kind == Kind::kMatch; }
  bool operator==(const Decision&) const = default;
};

struct RankedCandidates {
  std::vector<std::string> query_image_ids;
  std::vector<std::vector<Stage1Entry>> stage1;  // per query, empty for local
  std::vector<PooledCandidate> stage2;
  Decision decision;
  double threshold_used = 0;
};

// Equality of the identification outcome: pooled ranking, decision and
// threshold. Stage-1 scores are diagnostics and not part of the outcome.
bool same_outcome(const RankedCandidates& a, const RankedCandidates& b);

}  // namespace reid
