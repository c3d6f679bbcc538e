#include "reid/corpus.hpp"

#include <filesystem>

#include "reid/formats.hpp"
#include "reid/gallery_store.hpp"
#include "reid/image_io.hpp"
#include "reid/pipeline.hpp"
#include "reid/util.hpp"

namespace reid {

namespace fs = std::filesystem;

std::string resolve_path(const std::string& base_dir, const std::string& p) {
  if (base_dir.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base_dir) / p).string();
}

CaptureRecord record_from_row(const ManifestRow& row) {
  CaptureRecord c;
  c.image_id = image_id_from_path(row.image_path);
  if (!row.identity_id.empty()) c.identity_id = row.identity_id;
  c.capture_date = CaptureDate::parse(row.capture_date);
  c.rotation_quarter_turns = row.rotation_quarter_turns;
  c.image_path = row.image_path;
  c.mask_path = row.mask_path;
  return c;
}

CaptureImage load_capture(const CaptureRecord& r, const std::string& base_dir) {
  ImageRaster raster = read_image(resolve_path(base_dir, r.image_path));
  std::optional<BinaryMask> mask;
  if (!r.mask_path.empty()) mask = read_mask(resolve_path(base_dir, r.mask_path));
  CaptureImage c{r.image_id, r.identity_id, r.capture_date, r.rotation_quarter_turns,
                 std::move(mask), std::nullopt, std::move(raster)};
  validate_capture(c);
  return c;
}

Gallery extract_corpus(const std::string& manifest_path, const DetectorConfig& detector,
                       const ThumbnailConfig& thumbnail) {
  const auto rows = read_manifest(manifest_path);
  const std::string base = fs::path(manifest_path).parent_path().string();
  std::vector<CaptureRecord> records;
  for (size_t i = 0; i < rows.size(); ++i) {
    try {
      records.push_back(record_from_row(rows[i]));
    } catch (const Error& e) {
      throw Error(e.code(), std::string(e.what()) + " (manifest row " + std::to_string(i + 1) + ")");
    }
  }

  std::vector<GalleryEntry> entries(records.size());
  std::vector<std::string> errors(records.size());
  parallel_for(records.size(), [&](size_t i) {
    try {
      const QueryImage q = prepare_query(load_capture(records[i], base), detector, thumbnail);
      entries[i] = GalleryEntry{records[i], q.features, q.embedding};
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  });
  Gallery g;
  for (size_t i = 0; i < entries.size(); ++i) {
    if (!errors[i].empty()) {
      throw Error(ErrorCode::kIo, errors[i] + " (manifest row " + std::to_string(i + 1) + ")");
    }
    const std::string& id = records[i].image_id;
    if (g.entries.contains(id)) {
      throw Error(ErrorCode::kConflict,
                  "duplicate image_id " + id + " (manifest row " + std::to_string(i + 1) + ")");
    }
    if (records[i].identity_id) g.identities[*records[i].identity_id][id] = records[i].capture_date;
    g.entries.emplace(id, std::move(entries[i]));
  }
  return g;
}

void write_corpus_features(const Gallery& gallery, const std::string& features_dir,
                           const std::string& embeddings_path) {
  fs::create_directories(features_dir);
  std::vector<Embedding> embeddings;
  bool all = true;
  for (const auto& [id, e] : gallery.entries) {
    if (!e.features) throw Error(ErrorCode::kInvalidArgument, "features unavailable for " + id);
    write_feature_file(*e.features, (fs::path(features_dir) / (id + ".ridf")).string());
    if (e.embedding) {
      embeddings.push_back(*e.embedding);
    } else {
      all = false;
    }
  }
  if (!embeddings_path.empty() && all) write_embedding_file(embeddings, embeddings_path);
}

Gallery load_corpus(const std::string& dir, const DetectorConfig& detector,
                    const ThumbnailConfig& thumbnail) {
  const fs::path root(dir);
  const std::string manifest = (root / "manifest.csv").string();
  if (!fs::exists(manifest)) throw Error(ErrorCode::kNotFound, "missing file: " + manifest);
  if (fs::is_directory(root / "features")) {
    const fs::path emb = root / "embeddings.ride";
    return ingest(manifest, (root / "features").string(), fs::exists(emb) ? emb.string() : "");
  }
  return extract_corpus(manifest, detector, thumbnail);
}

}  // namespace reid
