#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "reid/manifest.hpp"
#include "reid/model.hpp"

namespace reid {

// Canonical pattern coordinates live in the unit square, head towards y=0.
struct Spot {
  double x = 0;
  double y = 0;
  double radius = 0;
  double intensity = 0;

  bool operator==(const Spot&) const = default;
};

struct BodyEllipse {
  double cx = 0.5;
  double cy = 0.5;
  double rx = 0.3;
  double ry = 0.42;

  double length() const noexcept { return 2.0 * ry; }
  bool contains(double x, double y, double margin = 0) const noexcept;
  bool operator==(const BodyEllipse&) const = default;
};

struct IdentityPattern {
  std::string identity_id;
  std::vector<Spot> spots;
  BodyEllipse body;

  bool operator==(const IdentityPattern&) const = default;
};

struct SessionParams {
  double deformation_amplitude = 0.03;  // max displacement, fraction of body length
  double rotation_jitter = 0.12;        // radians, uniform +-
  double scale_jitter = 0.06;           // fraction, uniform +-
  double translation_jitter = 0.03;     // fraction of image size, uniform +-
  double gain_jitter = 0.1;
  double bias_jitter = 0.05;
  double noise_sigma = 0.015;
  uint64_t background_seed = 0;
  int image_size = 256;

  void validate() const;
};

IdentityPattern generate_identity(uint64_t seed, const std::string& identity_id = {});

// Maps rendered (head-up) pixel coordinates to canonical pattern
// coordinates and back.
class PlantedWarp {
 public:
  static constexpr int kGrid = 6;

  PlantedWarp() = default;
  PlantedWarp(double cx, double cy, double scale, double angle,
              std::array<std::array<double, 2>, kGrid * kGrid> control);

  std::array<double, 2> to_canonical(double px, double py) const;
  std::array<double, 2> to_image(double u, double v) const;
  std::array<double, 2> displacement(double qx, double qy) const;

 private:
  double cx_ = 0, cy_ = 0, scale_ = 1, angle_ = 0;
  std::array<std::array<double, 2>, kGrid * kGrid> control_{};
};

struct RenderedCapture {
  CaptureImage capture;  // stored orientation; rotation_quarter_turns restores head-up
  PlantedWarp warp;      // in head-up pixel coordinates
};

// Renders one photograph: the capture carries raster and mask in stored
// orientation, identity_id set, image_id and date left for the caller.
RenderedCapture render_capture(const IdentityPattern& pattern, const SessionParams& session,
                               uint64_t seed, bool random_rotation = true);

struct DatasetSpec {
  int n_identities = 60;
  int sessions_per_identity = 4;
  int images_per_session = 3;
  uint64_t base_seed = 7;
  SessionParams session;
};

// image_<identity>_s<session>_<k>.png files plus manifest.csv under out_dir;
// paths in the manifest are relative to out_dir. Returns the rows written.
std::vector<ManifestRow> generate_dataset(const DatasetSpec& spec, const std::string& out_dir);

std::string synthetic_identity_id(int index);
std::string synthetic_image_id(int identity, int session, int image);
CaptureDate synthetic_session_date(int session);

}  // namespace reid
