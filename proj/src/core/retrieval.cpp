#include "reid/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "imgproc.hpp"

namespace reid {

std::vector<float> l2_normalize(std::span<const float> vec) {
  double sq = 0;
  for (float v : vec) sq += static_cast<double>(v) * v;
  if (!(sq > 0)) throw Error(ErrorCode::kDomain, "zero norm");
  const double norm = std::sqrt(sq);
  std::vector<float> out(vec.size());
  for (size_t i = 0; i < vec.size(); ++i) out[i] = static_cast<float>(vec[i] / norm);
  return out;
}

Embedding normalize_embedding(const Embedding& e) {
  return Embedding{e.image_id, l2_normalize(e.vector), true};
}

EmbeddingMatrix EmbeddingMatrix::from(std::span<const Embedding> embeddings) {
  std::vector<const Embedding*> ptrs;
  for (const auto& e : embeddings) ptrs.push_back(&e);
  return from(std::span<const Embedding* const>(ptrs));
}

EmbeddingMatrix EmbeddingMatrix::from(std::span<const Embedding* const> embeddings) {
  EmbeddingMatrix m;
  m.normalized = true;
  if (!embeddings.empty()) m.dim = embeddings.front()->vector.size();
  m.data.reserve(embeddings.size() * m.dim);
  for (const Embedding* e : embeddings) {
    if (e->vector.size() != m.dim) {
      throw Error(ErrorCode::kInvalidArgument, "embedding dimension not uniform");
    }
    m.image_ids.push_back(e->image_id);
    m.data.insert(m.data.end(), e->vector.begin(), e->vector.end());
    m.normalized = m.normalized && e->normalized;
  }
  return m;
}

namespace {

double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (size_t k = 0; k < a.size(); ++k) s += static_cast<double>(a[k]) * b[k];
  return s;
}

}  // namespace

std::vector<double> cosine_row(std::span<const float> query, const EmbeddingMatrix& gallery) {
  if (gallery.rows() > 0 && query.size() != gallery.dim) {
    throw Error(ErrorCode::kInvalidArgument, "embedding dimension mismatch");
  }
  std::vector<double> out(gallery.rows());
  for (size_t j = 0; j < gallery.rows(); ++j) out[j] = dot(query, gallery.row(j));
  return out;
}

SimilarityMatrix cosine_matrix(const EmbeddingMatrix& q, const EmbeddingMatrix& g) {
  if (!q.normalized || !g.normalized) {
    throw Error(ErrorCode::kInvalidArgument, "cosine_matrix needs normalized embeddings");
  }
  if (q.rows() > 0 && g.rows() > 0 && q.dim != g.dim) {
    throw Error(ErrorCode::kInvalidArgument, "embedding dimension mismatch");
  }
  SimilarityMatrix s{q.rows(), g.rows(), std::vector<double>(q.rows() * g.rows())};
  for (size_t i = 0; i < q.rows(); ++i) {
    for (size_t j = 0; j < g.rows(); ++j) s.data[i * s.cols + j] = dot(q.row(i), g.row(j));
  }
  return s;
}

std::vector<Stage1Entry> topk_shortlist(std::span<const double> sim_row,
                                        std::span<const std::string> ids, size_t k,
                                        const RowFilter& exclude) {
  if (k < 1) throw Error(ErrorCode::kInvalidArgument, "k must be >= 1");
  if (sim_row.size() != ids.size()) {
    throw Error(ErrorCode::kInvalidArgument, "similarity row and id list differ in length");
  }
  std::vector<size_t> order;
  order.reserve(ids.size());
  for (size_t j = 0; j < ids.size(); ++j) {
    if (!exclude || !exclude(j)) order.push_back(j);
  }
  auto better = [&](size_t a, size_t b) {
    if (sim_row[a] != sim_row[b]) return sim_row[a] > sim_row[b];
    return ids[a] < ids[b];
  };
  const size_t take = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + take, order.end(), better);
  std::vector<Stage1Entry> out;
  out.reserve(take);
  for (size_t i = 0; i < take; ++i) out.push_back({ids[order[i]], sim_row[order[i]]});
  return out;
}

void ThumbnailConfig::validate() const {
  if (size < 4) throw Error(ErrorCode::kInvalidArgument, "thumbnail size must be >= 4");
  if (zoom_factor < 1) throw Error(ErrorCode::kInvalidArgument, "thumbnail zoom must be >= 1");
  if (blur_sigma < 0) throw Error(ErrorCode::kInvalidArgument, "thumbnail blur must be >= 0");
}

Embedding thumbnail_embedding(const CaptureImage& capture, const ThumbnailConfig& cfg) {
  cfg.validate();
  const CaptureImage oriented = orient_capture(capture);
  ImageRaster gray = to_grayscale(oriented.raster);
  if (oriented.mask) gray = apply_mask(gray, *oriented.mask, 0.0f);
  PixelRect box{0, 0, gray.width(), gray.height()};
  if (oriented.bbox) {
    box = *oriented.bbox;
  } else if (oriented.mask) {
    box = mask_bounds(*oriented.mask);
  }

  // Crop at 4x the thumbnail size, low-pass, then average 4x4 blocks.
  PreprocessConfig pre;
  pre.target_size = std::max(16, cfg.size * 4);
  pre.zoom_factor = cfg.zoom_factor;
  const ImageRaster crop = crop_zoom_resize(gray, box, pre);
  detail::Plane plane = detail::plane_from_raster(crop);
  if (cfg.blur_sigma > 0) plane = detail::gaussian_blur(plane, 4.0 * cfg.blur_sigma);
  const int f = pre.target_size / cfg.size;
  std::vector<float> v(static_cast<size_t>(cfg.size) * cfg.size);
  for (int y = 0; y < cfg.size; ++y) {
    for (int x = 0; x < cfg.size; ++x) {
      double s = 0;
      for (int dy = 0; dy < f; ++dy) {
        for (int dx = 0; dx < f; ++dx) s += plane.at(x * f + dx, y * f + dy);
      }
      v[static_cast<size_t>(y) * cfg.size + x] = static_cast<float>(s / (f * f));
    }
  }
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  for (float& x : v) x = static_cast<float>(x - mean);
  return Embedding{capture.image_id, l2_normalize(v), true};
}

}  // namespace reid
