#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "reid/local_features.hpp"
#include "reid/pipeline.hpp"
#include "reid/preprocess.hpp"
#include "reid/retrieval.hpp"
#include "reid/synthgen.hpp"

namespace reid {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string token;                       // empty: no auth header required
  size_t max_upload_bytes = 32u << 20;     // whole request body
  unsigned workers = 1;                    // identification jobs run concurrently
  std::string threshold_name = "precision:0.95";  // key in thresholds.json; falls back to pipeline tau
};

struct EvalConfig {
  std::vector<size_t> k_list = {1, 3, 10};
  double histogram_bin_width = 1.0;
  double split_fraction = 0.2;
  std::vector<uint32_t> keypoint_budgets = {1432, 800, 400, 200};
};

struct AppConfig {
  PreprocessConfig preprocess;
  DetectorConfig detector;
  PipelineConfig pipeline;
  ThumbnailConfig embedding;
  ServiceConfig service;
  DatasetSpec synth;
  EvalConfig eval;

  // "section.key" = value, value in config-file syntax. Throws
  // kInvalidArgument on unknown keys or malformed values.
  void set(const std::string& dotted_key, const std::string& value);
  void validate() const;
};

// TOML-like subset: [section] headers, key = value lines, # comments,
// values are numbers, true/false, "strings" or [a, b] number lists.
AppConfig parse_config(const std::string& text);
AppConfig load_config(const std::string& path);

std::string format_config(const AppConfig& config);

}  // namespace reid
