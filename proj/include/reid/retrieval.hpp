#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "reid/model.hpp"
#include "reid/preprocess.hpp"

namespace reid {

// Throws ErrorCode::kDomain "zero norm" for a zero vector.
std::vector<float> l2_normalize(std::span<const float> vec);
Embedding normalize_embedding(const Embedding& embedding);

struct EmbeddingMatrix {
  std::vector<std::string> image_ids;
  size_t dim = 0;
  std::vector<float> data;  // image_ids.size() x dim, row-major
  bool normalized = false;

  size_t rows() const noexcept { return image_ids.size(); }
  std::span<const float> row(size_t i) const noexcept { return {data.data() + i * dim, dim}; }

  static EmbeddingMatrix from(std::span<const Embedding> embeddings);
  static EmbeddingMatrix from(std::span<const Embedding* const> embeddings);
};

struct SimilarityMatrix {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> data;

  double at(size_t i, size_t j) const noexcept { return data[i * cols + j]; }
  std::span<const double> row(size_t i) const noexcept { return {data.data() + i * cols, cols}; }
};

// Dot products accumulated in double in index order.
SimilarityMatrix cosine_matrix(const EmbeddingMatrix& queries, const EmbeddingMatrix& gallery);
std::vector<double> cosine_row(std::span<const float> query, const EmbeddingMatrix& gallery);

// exclude(j) == true removes gallery row j from consideration.
using RowFilter = std::function<bool(size_t)>;

// The k best rows by score, ties by ascending image_id.
std::vector<Stage1Entry> topk_shortlist(std::span<const double> sim_row,
                                        std::span<const std::string> gallery_ids, size_t k,
                                        const RowFilter& exclude = {});

// Stand-in global embedding: a blurred, downsampled, mean-centered
// thumbnail of the oriented and masked body crop.
struct ThumbnailConfig {
  int size = 24;
  double zoom_factor = 1.0;
  double blur_sigma = 1.0;  // in thumbnail pixels

  void validate() const;
};

Embedding thumbnail_embedding(const CaptureImage& capture, const ThumbnailConfig& config);

}  // namespace reid
