#include "reid/manifest.hpp"

#include <filesystem>
#include <sstream>

#include "reid/formats.hpp"
#include "reid/model.hpp"

namespace reid {

std::string image_id_from_path(const std::string& path) {
  return std::filesystem::path(path).stem().string();
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  for (size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw Error(ErrorCode::kFormat, "format: unterminated quoted CSV field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_manifest(const std::vector<ManifestRow>& rows) {
  std::ostringstream out;
  out << kManifestHeader << "\n";
  for (const auto& r : rows) {
    out << csv_escape(r.image_path) << ',' << csv_escape(r.mask_path) << ','
        << csv_escape(r.identity_id) << ',' << csv_escape(r.capture_date) << ','
        << r.rotation_quarter_turns << "\n";
  }
  return out.str();
}

std::vector<ManifestRow> parse_manifest(const std::string& text) {
  const auto table = parse_csv(text);
  if (table.empty()) throw Error(ErrorCode::kFormat, "format: manifest has no header");
  std::ostringstream header;
  for (size_t i = 0; i < table[0].size(); ++i) header << (i ? "," : "") << table[0][i];
  if (header.str() != kManifestHeader) {
    throw Error(ErrorCode::kFormat, "format: manifest header must be '" +
                                        std::string(kManifestHeader) + "'");
  }
  std::vector<ManifestRow> rows;
  for (size_t i = 1; i < table.size(); ++i) {
    const auto& f = table[i];
    if (f.size() != 5) {
      throw Error(ErrorCode::kFormat, "format: manifest row " + std::to_string(i) +
                                          " has " + std::to_string(f.size()) + " fields");
    }
    ManifestRow r{f[0], f[1], f[2], f[3], 0};
    try {
      size_t used = 0;
      r.rotation_quarter_turns = std::stoi(f[4], &used);
      if (used != f[4].size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw Error(ErrorCode::kFormat, "format: manifest row " + std::to_string(i) +
                                          " has a bad rotation '" + f[4] + "'");
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ManifestRow> read_manifest(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return parse_manifest(std::string(bytes.begin(), bytes.end()));
  } catch (const Error& e) {
    throw Error(e.code(), std::string(e.what()) + " (" + path + ")");
  }
}

void write_manifest(const std::string& path, const std::vector<ManifestRow>& rows) {
  write_file_atomic(path, format_manifest(rows));
}

}  // namespace reid
