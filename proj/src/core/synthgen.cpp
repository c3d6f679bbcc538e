#include "reid/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "reid/image_io.hpp"
#include "reid/preprocess.hpp"
#include "reid/util.hpp"

namespace reid {

bool BodyEllipse::contains(double x, double y, double margin) const noexcept {
  const double ax = rx - margin, ay = ry - margin;
  if (ax <= 0 || ay <= 0) return false;
  const double dx = (x - cx) / ax, dy = (y - cy) / ay;
  return dx * dx + dy * dy <= 1.0;
}

void SessionParams::validate() const {
  if (deformation_amplitude < 0) throw Error(ErrorCode::kInvalidArgument, "amplitude must be >= 0");
  if (scale_jitter < 0 || scale_jitter > 0.5) {
    throw Error(ErrorCode::kInvalidArgument, "scale jitter must be in [0, 0.5]");
  }
  if (rotation_jitter < 0 || translation_jitter < 0 || gain_jitter < 0 || bias_jitter < 0 ||
      noise_sigma < 0) {
    throw Error(ErrorCode::kInvalidArgument, "jitter parameters must be >= 0");
  }
  if (image_size < 128) throw Error(ErrorCode::kInvalidArgument, "image size must be >= 128");
}

IdentityPattern generate_identity(uint64_t seed, const std::string& identity_id) {
  Rng rng(seed);
  IdentityPattern p;
  p.identity_id = identity_id;
  p.body.rx = rng.uniform(0.26, 0.32);
  p.body.ry = rng.uniform(0.38, 0.44);
  const int target = 16 + static_cast<int>(rng.below(45));
  const double len = p.body.length();
  for (int s = 0; s < target; ++s) {
    const double r = len * std::exp(rng.uniform(std::log(0.012), std::log(0.06)));
    const double intensity = rng.uniform(0.7, 1.0);
    for (int attempt = 0; attempt < 200; ++attempt) {
      const double x = rng.uniform(p.body.cx - p.body.rx, p.body.cx + p.body.rx);
      const double y = rng.uniform(p.body.cy - p.body.ry, p.body.cy + p.body.ry);
      if (!p.body.contains(x, y, r + 0.01)) continue;
      bool clear = true;
      for (const Spot& o : p.spots) {
        if (std::hypot(o.x - x, o.y - y) < o.radius + r + 0.012) {
          clear = false;
          break;
        }
      }
      if (clear) {
        p.spots.push_back({x, y, r, intensity});
        break;
      }
    }
  }
  return p;
}

PlantedWarp::PlantedWarp(double cx, double cy, double scale, double angle,
                         std::array<std::array<double, 2>, kGrid * kGrid> control)
    : cx_(cx), cy_(cy), scale_(scale), angle_(angle), control_(control) {}

namespace {

void bspline_weights(double t, double w[4]) {
  const double t2 = t * t, t3 = t2 * t;
  w[0] = (1 - t) * (1 - t) * (1 - t) / 6.0;
  w[1] = (3 * t3 - 6 * t2 + 4) / 6.0;
  w[2] = (-3 * t3 + 3 * t2 + 3 * t + 1) / 6.0;
  w[3] = t3 / 6.0;
}

}  // namespace

std::array<double, 2> PlantedWarp::displacement(double qx, double qy) const {
  constexpr int kCells = kGrid - 3;
  auto locate = [](double q, int& cell, double& t) {
    const double g = std::clamp(q, 0.0, 1.0) * kCells;
    cell = std::min(static_cast<int>(g), kCells - 1);
    t = g - cell;
  };
  int ix, iy;
  double tx, ty, wx[4], wy[4];
  locate(qx, ix, tx);
  locate(qy, iy, ty);
  bspline_weights(tx, wx);
  bspline_weights(ty, wy);
  double dx = 0, dy = 0;
  for (int b = 0; b < 4; ++b) {
    for (int a = 0; a < 4; ++a) {
      const auto& c = control_[(iy + b) * kGrid + ix + a];
      const double w = wx[a] * wy[b];
      dx += w * c[0];
      dy += w * c[1];
    }
  }
  return {dx, dy};
}

std::array<double, 2> PlantedWarp::to_canonical(double px, double py) const {
  const double c = std::cos(angle_), s = std::sin(angle_);
  const double dx = px - cx_, dy = py - cy_;
  const double qx = (c * dx + s * dy) / scale_ + 0.5;
  const double qy = (-s * dx + c * dy) / scale_ + 0.5;
  const auto d = displacement(qx, qy);
  return {qx + d[0], qy + d[1]};
}

std::array<double, 2> PlantedWarp::to_image(double u, double v) const {
  double qx = u, qy = v;
  for (int it = 0; it < 200; ++it) {
    const auto d = displacement(qx, qy);
    const double nx = u - d[0], ny = v - d[1];
    const double change = std::abs(nx - qx) + std::abs(ny - qy);
    qx = nx;
    qy = ny;
    if (change < 1e-13) break;
  }
  const double c = std::cos(angle_), s = std::sin(angle_);
  const double ox = (qx - 0.5) * scale_, oy = (qy - 0.5) * scale_;
  return {c * ox - s * oy + cx_, s * ox + c * oy + cy_};
}

namespace {

constexpr double kBodyTone = 0.2;
constexpr double kSpotSoftness = 0.004;

double pattern_value(const IdentityPattern& p, double u, double v) {
  double value = kBodyTone;
  for (const Spot& s : p.spots) {
    const double dx = u - s.x, dy = v - s.y;
    const double reach = s.radius + kSpotSoftness;
    if (std::abs(dx) > reach || std::abs(dy) > reach) continue;
    const double a = std::clamp((s.radius - std::hypot(dx, dy)) / kSpotSoftness + 0.5, 0.0, 1.0);
    value = std::max(value, kBodyTone + (s.intensity - kBodyTone) * a);
  }
  return value;
}

// Smooth value noise on a coarse lattice, bilinearly interpolated.
class Background {
 public:
  explicit Background(uint64_t seed, int size) : size_(size) {
    Rng rng(seed);
    for (auto& v : lattice_) v = rng.uniform(0.3, 0.65);
  }
  double at(double x, double y) const {
    const double gx = std::clamp(x / size_, 0.0, 1.0) * (kN - 1);
    const double gy = std::clamp(y / size_, 0.0, 1.0) * (kN - 1);
    const int ix = std::min(static_cast<int>(gx), kN - 2);
    const int iy = std::min(static_cast<int>(gy), kN - 2);
    const double tx = gx - ix, ty = gy - iy;
    auto l = [&](int i, int j) { return lattice_[j * kN + i]; };
    return (1 - ty) * ((1 - tx) * l(ix, iy) + tx * l(ix + 1, iy)) +
           ty * ((1 - tx) * l(ix, iy + 1) + tx * l(ix + 1, iy + 1));
  }

 private:
  static constexpr int kN = 12;
  int size_;
  std::array<double, kN * kN> lattice_{};
};

}  // namespace

RenderedCapture render_capture(const IdentityPattern& pattern, const SessionParams& session,
                               uint64_t seed, bool random_rotation) {
  session.validate();
  Rng rng(seed);
  const int n = session.image_size;
  const double scale = 0.95 * n * (1.0 + rng.uniform(-1, 1) * session.scale_jitter);
  const double angle = rng.uniform(-1, 1) * session.rotation_jitter;
  const double cx = (n - 1) / 2.0 + rng.uniform(-1, 1) * session.translation_jitter * n;
  const double cy = (n - 1) / 2.0 + rng.uniform(-1, 1) * session.translation_jitter * n;
  std::array<std::array<double, 2>, PlantedWarp::kGrid * PlantedWarp::kGrid> control{};
  const double max_disp = session.deformation_amplitude * pattern.body.length();
  for (auto& c : control) {
    const double mag = rng.uniform() * max_disp;
    const double dir = rng.uniform() * 2.0 * M_PI;
    c = {mag * std::cos(dir), mag * std::sin(dir)};
  }
  const double gain = 1.0 + rng.uniform(-1, 1) * session.gain_jitter;
  const double bias = rng.uniform(-1, 1) * session.bias_jitter;
  const Background background(session.background_seed, n);
  const int turns = random_rotation ? static_cast<int>(rng.below(4)) : 0;

  RenderedCapture out{CaptureImage{{}, pattern.identity_id, {}, 0, std::nullopt, std::nullopt,
                                   ImageRaster::filled(1, 1, 1, 0.0f)},
                      PlantedWarp(cx, cy, scale, angle, control)};
  const PlantedWarp& warp = out.warp;

  std::vector<float> pixels(static_cast<size_t>(n) * n);
  BinaryMask mask{n, n, std::vector<uint8_t>(pixels.size(), 0)};
  static const double kOffsets[2] = {-0.25, 0.25};
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      double acc = 0;
      for (double oy : kOffsets) {
        for (double ox : kOffsets) {
          const auto q = warp.to_canonical(x + ox, y + oy);
          acc += pattern.body.contains(q[0], q[1]) ? pattern_value(pattern, q[0], q[1])
                                                   : background.at(x + ox, y + oy);
        }
      }
      const auto centre = warp.to_canonical(x, y);
      mask.bits[static_cast<size_t>(y) * n + x] = pattern.body.contains(centre[0], centre[1]);
      const double v = gain * acc / 4.0 + bias + rng.normal() * session.noise_sigma;
      // quantized so that a PNG round trip is lossless
      pixels[static_cast<size_t>(y) * n + x] =
          static_cast<float>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0);
    }
  }
  const ImageRaster head_up(n, n, 1, std::move(pixels));
  const int store = (4 - turns) % 4;
  out.capture.raster = rotate_quarter_turns(head_up, store);
  out.capture.mask = rotate_quarter_turns(mask, store);
  out.capture.rotation_quarter_turns = turns;
  return out;
}

std::string synthetic_identity_id(int index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "F%03d", index + 1);
  return buf;
}

std::string synthetic_image_id(int identity, int session, int image) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "F%03d_s%d_%02d", identity + 1, session + 1, image + 1);
  return buf;
}

CaptureDate synthetic_session_date(int session) {
  return CaptureDate(CaptureDate::from_ymd(2014, 4, 1).days() + 30 * session);
}

std::vector<ManifestRow> generate_dataset(const DatasetSpec& spec, const std::string& out_dir) {
  if (spec.n_identities < 1 || spec.sessions_per_identity < 1 || spec.images_per_session < 1) {
    throw Error(ErrorCode::kInvalidArgument, "dataset counts must be >= 1");
  }
  spec.session.validate();
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "masks");

  struct Job {
    int identity, session, image;
  };
  std::vector<Job> jobs;
  for (int i = 0; i < spec.n_identities; ++i) {
    for (int s = 0; s < spec.sessions_per_identity; ++s) {
      for (int k = 0; k < spec.images_per_session; ++k) jobs.push_back({i, s, k});
    }
  }
  std::vector<IdentityPattern> patterns;
  for (int i = 0; i < spec.n_identities; ++i) {
    patterns.push_back(generate_identity(derive_seed(splitmix64(spec.base_seed), i),
                                         synthetic_identity_id(i)));
  }

  std::vector<ManifestRow> rows(jobs.size());
  parallel_for(jobs.size(), [&](size_t j) {
    const Job& job = jobs[j];
    SessionParams params = spec.session;
    const uint64_t seed = derive_seed(spec.base_seed, j);
    // a fresh background per photograph
    params.background_seed = splitmix64(derive_seed(spec.base_seed ^ 0x5e55105eULL, job.session) ^ seed);
    const RenderedCapture r = render_capture(patterns[job.identity], params, seed);
    const std::string id = synthetic_image_id(job.identity, job.session, job.image);
    const std::string image_rel = "images/" + id + ".png";
    const std::string mask_rel = "masks/" + id + ".png";
    write_png((fs::path(out_dir) / image_rel).string(), r.capture.raster);
    write_png((fs::path(out_dir) / mask_rel).string(), *r.capture.mask);
    rows[j] = ManifestRow{image_rel, mask_rel, patterns[job.identity].identity_id,
                          synthetic_session_date(job.session).iso(),
                          r.capture.rotation_quarter_turns};
  });
  write_manifest((fs::path(out_dir) / "manifest.csv").string(), rows);
  return rows;
}

}  // namespace reid
