#pragma once

#include <string>
#include <vector>

namespace reid {

// One capture row: image_path, mask_path, identity_id, capture_date,
// rotation_quarter_turns. The image_id is the image file stem.
struct ManifestRow {
  std::string image_path;
  std::string mask_path;
  std::string identity_id;
  std::string capture_date;
  int rotation_quarter_turns = 0;

  bool operator==(const ManifestRow&) const = default;
};

inline constexpr const char* kManifestHeader =
    "image_path,mask_path,identity_id,capture_date,rotation_quarter_turns";

std::string image_id_from_path(const std::string& path);

std::string format_manifest(const std::vector<ManifestRow>& rows);
std::vector<ManifestRow> parse_manifest(const std::string& text);
std::vector<ManifestRow> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows);

// RFC 4180 style fields: quoted when they contain comma, quote or newline.
std::string csv_escape(const std::string& field);
std::vector<std::vector<std::string>> parse_csv(const std::string& text);

}  // namespace reid
