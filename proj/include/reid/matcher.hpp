#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "reid/model.hpp"

namespace reid {

enum class SimilarityMode { kRawCount, kRansacInlierCount };

std::string to_string(SimilarityMode mode);
SimilarityMode parse_similarity_mode(const std::string& text);

struct MatchConfig {
  double ratio = 0.75;
  int ransac_iterations = 2000;
  double inlier_threshold_px = 3.0;
  int min_matches_for_ransac = 4;
  SimilarityMode similarity_mode = SimilarityMode::kRansacInlierCount;
  bool mutual = false;  // additionally require b->a nearest neighbor agreement

  void validate() const;
};

struct NeighborPair {
  uint32_t index_a = 0;
  uint32_t index_b = 0;  // nearest row of b
  double d1 = 0;
  double d2 = std::numeric_limits<double>::infinity();  // second nearest
};

// Exact two nearest Euclidean neighbors in b for every row of a. Ties go to
// the lower row index.
std::vector<NeighborPair> match_bruteforce(const DescriptorMatrix& a, const DescriptorMatrix& b);

// Keeps pairs with d1 < ratio * d2. Score is 1 - d1/d2 (1 when d2 is
// infinite). Gallery-side indices may repeat.
std::vector<Correspondence> ratio_test(std::span<const NeighborPair> candidates, double ratio);

struct RansacResult {
  Homography homography{};
  std::vector<uint32_t> inliers;  // indices into the correspondence list
};

// Throws ErrorCode::kUnderdetermined with fewer than max(4,
// min_matches_for_ransac) correspondences and kDegenerateGeometry when
// no non-degenerate sample is found within ten times the iteration budget.
RansacResult estimate_homography_ransac(std::span<const Correspondence> correspondences,
                                        std::span<const Keypoint> keypoints_a,
                                        std::span<const Keypoint> keypoints_b,
                                        const MatchConfig& config, uint64_t seed);

// Least-squares homography (normalized DLT) through all point pairs, scaled
// so that H[8] == 1. Needs at least four pairs.
Homography fit_homography(std::span<const std::array<double, 2>> from,
                          std::span<const std::array<double, 2>> to);

std::array<double, 2> apply_homography(const Homography& h, double x, double y);

MatchResult match_pair(const FeatureSet& a, const FeatureSet& b, const MatchConfig& config,
                       uint64_t seed);

// Reads an adapter match file; similarity is the correspondence count.
MatchResult import_matches(const std::string& path);

}  // namespace reid
