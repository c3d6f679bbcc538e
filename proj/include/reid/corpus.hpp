#pragma once

#include <string>

#include "reid/local_features.hpp"
#include "reid/manifest.hpp"
#include "reid/model.hpp"
#include "reid/retrieval.hpp"

namespace reid {

// p itself when absolute or base_dir is empty, else base_dir / p.
std::string resolve_path(const std::string& base_dir, const std::string& p);

// Manifest row to capture metadata; an empty identity_id stays absent.
CaptureRecord record_from_row(const ManifestRow& row);

// Reads the raster and mask (when mask_path is set) of a record.
CaptureImage load_capture(const CaptureRecord& record, const std::string& base_dir);

// Extracts local features and thumbnail embeddings for every manifest row.
Gallery extract_corpus(const std::string& manifest_path, const DetectorConfig& detector,
                       const ThumbnailConfig& thumbnail);

// Writes <features_dir>/<image_id>.ridf per entry and, when every entry has
// one and the path is non-empty, an embedding file.
void write_corpus_features(const Gallery& gallery, const std::string& features_dir,
                           const std::string& embeddings_path);

// A directory holding manifest.csv. With a features/ subdirectory the stored
// features (and embeddings.ride if present) are ingested; otherwise they are
// extracted from the images.
Gallery load_corpus(const std::string& dir, const DetectorConfig& detector,
                    const ThumbnailConfig& thumbnail);

}  // namespace reid
