#pragma once

#include <cmath>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "reid/eval.hpp"
#include "reid/model.hpp"
#include "reid/util.hpp"

namespace reid::testing {

inline std::filesystem::path fresh_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("reid_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline CaptureRecord record(const std::string& id, const std::string& identity,
                            const std::string& date) {
  CaptureRecord r;
  r.image_id = id;
  if (!identity.empty()) r.identity_id = identity;
  r.capture_date = CaptureDate::parse(date);
  r.image_path = "images/" + id + ".png";
  return r;
}

inline DescriptorMatrix random_descriptors(Rng& rng, size_t rows, size_t cols) {
  DescriptorMatrix m(rows, cols);
  for (auto& v : m.data) v = static_cast<float>(rng.uniform());
  return m;
}

inline std::shared_ptr<FeatureSet> random_features(const std::string& id, size_t n, uint64_t seed) {
  Rng rng(seed);
  auto f = std::make_shared<FeatureSet>();
  f->image_id = id;
  for (size_t i = 0; i < n; ++i) {
    f->keypoints.push_back({static_cast<float>(rng.uniform(0, 200)), static_cast<float>(rng.uniform(0, 200)),
                            static_cast<float>(rng.uniform(1, 4)), static_cast<float>(rng.uniform(0, 6)),
                            static_cast<float>(1.0 - i * 1e-3)});
  }
  f->descriptors = random_descriptors(rng, n, 128);
  return f;
}

inline std::shared_ptr<Embedding> random_embedding(const std::string& id, size_t dim, uint64_t seed) {
  Rng rng(seed);
  auto e = std::make_shared<Embedding>();
  e->image_id = id;
  double norm = 0;
  for (size_t i = 0; i < dim; ++i) {
    e->vector.push_back(static_cast<float>(rng.normal()));
    norm += double(e->vector.back()) * e->vector.back();
  }
  for (auto& v : e->vector) v = static_cast<float>(v / std::sqrt(norm));
  e->normalized = true;
  return e;
}

// Twelve labeled captures over four dates:
//   2014-04-01: A1 A2 B1 D1     2014-05-01: A3 C1 C2 D2
//   2014-06-01: B2 B3 D3        2014-07-01: E1
// C and E are single-date identities.
inline std::vector<CaptureRecord> protocol_fixture() {
  return {record("A1", "A", "2014-04-01"), record("A2", "A", "2014-04-01"),
          record("A3", "A", "2014-05-01"), record("B1", "B", "2014-04-01"),
          record("B2", "B", "2014-06-01"), record("B3", "B", "2014-06-01"),
          record("C1", "C", "2014-05-01"), record("C2", "C", "2014-05-01"),
          record("D1", "D", "2014-04-01"), record("D2", "D", "2014-05-01"),
          record("D3", "D", "2014-06-01"), record("E1", "E", "2014-07-01")};
}

// Reference sets for protocol_fixture(), enumerated by hand.
inline std::map<std::string, std::vector<std::string>> protocol_fixture_expected() {
  const std::vector<std::string> not_d1 = {"A3", "B2", "B3", "C1", "C2", "D2", "D3", "E1"};
  const std::vector<std::string> not_d2 = {"A1", "A2", "B1", "B2", "B3", "D1", "D3", "E1"};
  const std::vector<std::string> not_d3 = {"A1", "A2", "A3", "B1", "C1", "C2", "D1", "D2", "E1"};
  return {{"A1", not_d1}, {"A2", not_d1}, {"A3", not_d2}, {"B1", not_d1}, {"B2", not_d3},
          {"B3", not_d3}, {"D1", not_d1}, {"D2", not_d2}, {"D3", not_d3}};
}

}  // namespace reid::testing
