#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "imgproc.hpp"
#include "reid/formats.hpp"
#include "reid/local_features.hpp"
#include "reid/preprocess.hpp"

namespace reid {

void DetectorConfig::validate() const {
  if (max_keypoints < 1) throw Error(ErrorCode::kInvalidArgument, "max_keypoints must be >= 1");
  if (!(contrast_threshold > 0) || !(edge_threshold > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "detector thresholds must be > 0");
  }
  if (n_octaves < 1 || scales_per_octave < 1) {
    throw Error(ErrorCode::kInvalidArgument, "octave/scale counts must be >= 1");
  }
  if (!(sigma > 0)) throw Error(ErrorCode::kInvalidArgument, "sigma must be > 0");
}

namespace {

using detail::Plane;
constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr int kBorder = 5;
constexpr int kMaxRefineSteps = 5;
constexpr int kOriBins = 36;
constexpr double kOriPeakRatio = 0.8;
constexpr double kOriSigmaFactor = 1.5;
constexpr int kDescWidth = 4;
constexpr int kDescBins = 8;
constexpr double kDescScaleFactor = 3.0;
constexpr double kDescMagThreshold = 0.2;
constexpr double kInitialBlur = 0.5;

struct Candidate {
  Keypoint kp;
  int octave;
  int layer;
  double octave_scale;  // sigma within the octave
};

struct Pyramid {
  std::vector<std::vector<Plane>> gauss;
  std::vector<std::vector<Plane>> dog;
};

Pyramid build_pyramid(const Plane& base, int octaves, int s, double sigma) {
  std::vector<double> sig(s + 3);
  sig[0] = sigma;
  const double k = std::pow(2.0, 1.0 / s);
  for (int i = 1; i < s + 3; ++i) {
    const double prev = std::pow(k, i - 1) * sigma;
    const double total = prev * k;
    sig[i] = std::sqrt(total * total - prev * prev);
  }
  Pyramid p;
  p.gauss.resize(octaves);
  p.dog.resize(octaves);
  for (int o = 0; o < octaves; ++o) {
    auto& g = p.gauss[o];
    g.reserve(s + 3);
    g.push_back(o == 0 ? base : detail::decimate(p.gauss[o - 1][s]));
    for (int i = 1; i < s + 3; ++i) g.push_back(detail::gaussian_blur(g[i - 1], sig[i]));
    auto& d = p.dog[o];
    for (int i = 0; i + 1 < s + 3; ++i) {
      Plane diff(g[i].width, g[i].height);
      for (size_t j = 0; j < diff.data.size(); ++j) diff.data[j] = g[i + 1].data[j] - g[i].data[j];
      d.push_back(std::move(diff));
    }
  }
  return p;
}

bool is_extremum(const std::vector<Plane>& dog, int layer, int x, int y, float v) {
  if (v > 0) {
    for (int l = layer - 1; l <= layer + 1; ++l) {
      const Plane& p = dog[l];
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (p.at(x + dx, y + dy) > v) return false;
        }
      }
    }
  } else {
    for (int l = layer - 1; l <= layer + 1; ++l) {
      const Plane& p = dog[l];
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (p.at(x + dx, y + dy) < v) return false;
        }
      }
    }
  }
  return true;
}

// Quadratic refinement of an extremum; false when rejected.
bool refine(const std::vector<Plane>& dog, int s, int octave, double sigma,
            const DetectorConfig& cfg, int x, int y, int layer, Candidate& out) {
  double xi = 0, xr = 0, xc = 0;
  int step = 0;
  const int w = dog[0].width, h = dog[0].height;
  for (; step < kMaxRefineSteps; ++step) {
    const Plane& cur = dog[layer];
    const Plane& prv = dog[layer - 1];
    const Plane& nxt = dog[layer + 1];
    const double v2 = 2.0 * cur.at(x, y);
    const double dx = 0.5 * (cur.at(x + 1, y) - cur.at(x - 1, y));
    const double dy = 0.5 * (cur.at(x, y + 1) - cur.at(x, y - 1));
    const double ds = 0.5 * (nxt.at(x, y) - prv.at(x, y));
    const double dxx = cur.at(x + 1, y) + cur.at(x - 1, y) - v2;
    const double dyy = cur.at(x, y + 1) + cur.at(x, y - 1) - v2;
    const double dss = nxt.at(x, y) + prv.at(x, y) - v2;
    const double dxy = 0.25 * (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) -
                               cur.at(x + 1, y - 1) + cur.at(x - 1, y - 1));
    const double dxs = 0.25 * (nxt.at(x + 1, y) - nxt.at(x - 1, y) -
                               prv.at(x + 1, y) + prv.at(x - 1, y));
    const double dys = 0.25 * (nxt.at(x, y + 1) - nxt.at(x, y - 1) -
                               prv.at(x, y + 1) + prv.at(x, y - 1));
    // Solve H * X = -g with Cramer's rule (3x3, symmetric).
    const double a = dxx, b = dxy, c = dxs, d = dyy, e = dys, f = dss;
    const double det = a * (d * f - e * e) - b * (b * f - e * c) + c * (b * e - d * c);
    if (std::abs(det) < 1e-12) return false;
    const double i00 = (d * f - e * e) / det, i01 = (c * e - b * f) / det,
                 i02 = (b * e - c * d) / det, i11 = (a * f - c * c) / det,
                 i12 = (b * c - a * e) / det, i22 = (a * d - b * b) / det;
    xc = -(i00 * dx + i01 * dy + i02 * ds);
    xr = -(i01 * dx + i11 * dy + i12 * ds);
    xi = -(i02 * dx + i12 * dy + i22 * ds);
    if (std::abs(xi) < 0.5 && std::abs(xr) < 0.5 && std::abs(xc) < 0.5) break;
    if (std::abs(xi) > 1e6 || std::abs(xr) > 1e6 || std::abs(xc) > 1e6) return false;
    x += static_cast<int>(std::lround(xc));
    y += static_cast<int>(std::lround(xr));
    layer += static_cast<int>(std::lround(xi));
    if (layer < 1 || layer > s || x < kBorder || x >= w - kBorder || y < kBorder ||
        y >= h - kBorder) {
      return false;
    }
  }
  if (step >= kMaxRefineSteps) return false;

  const Plane& cur = dog[layer];
  const Plane& prv = dog[layer - 1];
  const Plane& nxt = dog[layer + 1];
  const double dx = 0.5 * (cur.at(x + 1, y) - cur.at(x - 1, y));
  const double dy = 0.5 * (cur.at(x, y + 1) - cur.at(x, y - 1));
  const double ds = 0.5 * (nxt.at(x, y) - prv.at(x, y));
  const double contrast = cur.at(x, y) + 0.5 * (dx * xc + dy * xr + ds * xi);
  if (std::abs(contrast) * s < cfg.contrast_threshold) return false;

  const double v2 = 2.0 * cur.at(x, y);
  const double dxx = cur.at(x + 1, y) + cur.at(x - 1, y) - v2;
  const double dyy = cur.at(x, y + 1) + cur.at(x, y - 1) - v2;
  const double dxy = 0.25 * (cur.at(x + 1, y + 1) - cur.at(x - 1, y + 1) -
                             cur.at(x + 1, y - 1) + cur.at(x - 1, y - 1));
  const double tr = dxx + dyy;
  const double det = dxx * dyy - dxy * dxy;
  const double r = cfg.edge_threshold;
  if (det <= 0 || tr * tr * r >= (r + 1) * (r + 1) * det) return false;

  const double scale = std::pow(2.0, octave);
  out.kp.x = static_cast<float>((x + xc + 0.5) * scale - 0.5);
  out.kp.y = static_cast<float>((y + xr + 0.5) * scale - 0.5);
  out.octave_scale = sigma * std::pow(2.0, (layer + xi) / s);
  out.kp.scale = static_cast<float>(out.octave_scale * scale);
  out.kp.response = static_cast<float>(std::abs(contrast));
  out.octave = octave;
  out.layer = layer;
  return true;
}

std::vector<double> orientations(const Plane& img, int px, int py, double octave_scale) {
  const double sigma_w = kOriSigmaFactor * octave_scale;
  const int radius = static_cast<int>(std::lround(3.0 * sigma_w));
  const double weight_scale = -1.0 / (2.0 * sigma_w * sigma_w);
  std::array<double, kOriBins> hist{};
  for (int i = -radius; i <= radius; ++i) {
    const int y = py + i;
    if (y <= 0 || y >= img.height - 1) continue;
    for (int j = -radius; j <= radius; ++j) {
      const int x = px + j;
      if (x <= 0 || x >= img.width - 1) continue;
      const double gx = img.at(x + 1, y) - img.at(x - 1, y);
      const double gy = img.at(x, y + 1) - img.at(x, y - 1);
      const double mag = std::sqrt(gx * gx + gy * gy);
      double ang = std::atan2(gy, gx);
      if (ang < 0) ang += kTwoPi;
      int bin = static_cast<int>(std::lround(kOriBins * ang / kTwoPi));
      if (bin >= kOriBins) bin -= kOriBins;
      hist[bin] += std::exp((i * i + j * j) * weight_scale) * mag;
    }
  }
  std::array<double, kOriBins> smooth{};
  for (int b = 0; b < kOriBins; ++b) {
    auto h = [&](int k) { return hist[(b + k + kOriBins) % kOriBins]; };
    smooth[b] = (h(-2) + h(2)) * (1.0 / 16) + (h(-1) + h(1)) * (4.0 / 16) + h(0) * (6.0 / 16);
  }
  const double peak = *std::max_element(smooth.begin(), smooth.end());
  std::vector<double> out;
  if (peak <= 0) return out;
  for (int b = 0; b < kOriBins; ++b) {
    const double l = smooth[(b - 1 + kOriBins) % kOriBins];
    const double r = smooth[(b + 1) % kOriBins];
    const double c = smooth[b];
    if (c > l && c > r && c >= kOriPeakRatio * peak) {
      double bin = b + 0.5 * (l - r) / (l - 2 * c + r);
      if (bin < 0) bin += kOriBins;
      if (bin >= kOriBins) bin -= kOriBins;
      out.push_back(kTwoPi * bin / kOriBins);
    }
  }
  return out;
}

// Fills desc (128 values) and returns false for a flat patch.
bool describe(const Plane& img, double fx, double fy, double angle, double octave_scale,
              std::span<float> desc) {
  const int d = kDescWidth, n = kDescBins;
  const int px = static_cast<int>(std::lround(fx));
  const int py = static_cast<int>(std::lround(fy));
  const double cos_t = std::cos(angle), sin_t = std::sin(angle);
  const double hist_width = kDescScaleFactor * octave_scale;
  int radius = static_cast<int>(std::lround(hist_width * std::sqrt(2.0) * (d + 1) * 0.5));
  radius = std::min(radius, static_cast<int>(std::sqrt(double(img.width) * img.width +
                                                       double(img.height) * img.height)));
  const double exp_scale = -1.0 / (d * d * 0.5);
  std::vector<double> hist((d + 2) * (d + 2) * (n + 2), 0.0);
  const double bins_per_rad = n / kTwoPi;

  for (int i = -radius; i <= radius; ++i) {
    for (int j = -radius; j <= radius; ++j) {
      // Sample offset in the keypoint frame, in histogram-cell units.
      const double c_rot = (j * cos_t + i * sin_t) / hist_width;
      const double r_rot = (-j * sin_t + i * cos_t) / hist_width;
      const double rbin = r_rot + d / 2.0 - 0.5;
      const double cbin = c_rot + d / 2.0 - 0.5;
      if (!(rbin > -1 && rbin < d && cbin > -1 && cbin < d)) continue;
      const int x = px + j, y = py + i;
      if (x <= 0 || x >= img.width - 1 || y <= 0 || y >= img.height - 1) continue;
      const double gx = img.at(x + 1, y) - img.at(x - 1, y);
      const double gy = img.at(x, y + 1) - img.at(x, y - 1);
      double ori = std::atan2(gy, gx) - angle;
      while (ori < 0) ori += kTwoPi;
      while (ori >= kTwoPi) ori -= kTwoPi;
      const double mag = std::sqrt(gx * gx + gy * gy) *
                         std::exp((c_rot * c_rot + r_rot * r_rot) * exp_scale);
      const double obin = ori * bins_per_rad;

      const int r0 = static_cast<int>(std::floor(rbin));
      const int c0 = static_cast<int>(std::floor(cbin));
      int o0 = static_cast<int>(std::floor(obin));
      const double dr = rbin - r0, dc = cbin - c0, dor = obin - o0;
      if (o0 >= n) o0 -= n;
      for (int a = 0; a <= 1; ++a) {
        const double va = mag * (a ? dr : 1 - dr);
        for (int b = 0; b <= 1; ++b) {
          const double vb = va * (b ? dc : 1 - dc);
          for (int c = 0; c <= 1; ++c) {
            const double vc = vb * (c ? dor : 1 - dor);
            const int ob = (o0 + c) % n;
            hist[((r0 + 1 + a) * (d + 2) + (c0 + 1 + b)) * (n + 2) + ob] += vc;
          }
        }
      }
    }
  }

  std::array<double, kDescriptorDim> raw{};
  for (int r = 0; r < d; ++r) {
    for (int c = 0; c < d; ++c) {
      for (int o = 0; o < n; ++o) {
        raw[(r * d + c) * n + o] = hist[((r + 1) * (d + 2) + (c + 1)) * (n + 2) + o];
      }
    }
  }
  double norm = 0;
  for (double v : raw) norm += v * v;
  norm = std::sqrt(norm);
  if (norm < 1e-12) return false;
  const double clamp = kDescMagThreshold * norm;
  double norm2 = 0;
  for (double& v : raw) {
    v = std::min(v, clamp);
    norm2 += v * v;
  }
  norm2 = std::sqrt(norm2);
  for (size_t k = 0; k < kDescriptorDim; ++k) desc[k] = static_cast<float>(raw[k] / norm2);
  return true;
}

bool stronger(const Keypoint& a, const Keypoint& b) {
  if (a.response != b.response) return a.response > b.response;
  if (a.y != b.y) return a.y < b.y;
  if (a.x != b.x) return a.x < b.x;
  if (a.scale != b.scale) return a.scale < b.scale;
  return a.orientation < b.orientation;
}

}  // namespace

FeatureSet detect_and_describe(const ImageRaster& raster, const DetectorConfig& cfg,
                               const std::string& image_id) {
  cfg.validate();
  if (std::min(raster.width(), raster.height()) < 32) {
    throw Error(ErrorCode::kInvalidArgument, "image too small for detection (min side 32)");
  }
  Plane gray = detail::plane_from_raster(to_grayscale(raster));
  const double pre_blur = cfg.upsample ? 2.0 * kInitialBlur : kInitialBlur;
  Plane base = cfg.upsample ? detail::resize_bilinear(gray, gray.width * 2, gray.height * 2)
                            : gray;
  base = detail::gaussian_blur(
      base, std::sqrt(std::max(cfg.sigma * cfg.sigma - pre_blur * pre_blur, 0.01)));

  const int s = cfg.scales_per_octave;
  const int min_side = std::min(base.width, base.height);
  const int max_octaves =
      std::max(1, static_cast<int>(std::floor(std::log2(min_side / 16.0))) + 1);
  const int octaves = std::min(cfg.n_octaves, max_octaves);
  const Pyramid pyr = build_pyramid(base, octaves, s, cfg.sigma);
  const double coord_scale = cfg.upsample ? 0.5 : 1.0;
  const float prefilter = static_cast<float>(0.5 * cfg.contrast_threshold / s);

  struct Described {
    Keypoint kp;
    std::array<float, kDescriptorDim> desc;
  };
  std::vector<Described> found;

  for (int o = 0; o < octaves; ++o) {
    const auto& dog = pyr.dog[o];
    const int w = dog[0].width, h = dog[0].height;
    for (int layer = 1; layer <= s; ++layer) {
      const Plane& cur = dog[layer];
      for (int y = kBorder; y < h - kBorder; ++y) {
        for (int x = kBorder; x < w - kBorder; ++x) {
          const float v = cur.at(x, y);
          if (std::abs(v) <= prefilter) continue;
          if (!is_extremum(dog, layer, x, y, v)) continue;
          Candidate cand{};
          if (!refine(dog, s, o, cfg.sigma, cfg, x, y, layer, cand)) continue;
          const Plane& img = pyr.gauss[o][cand.layer];
          const double inv = 1.0 / std::pow(2.0, o);
          const double ox = (cand.kp.x + 0.5) * inv - 0.5, oy = (cand.kp.y + 0.5) * inv - 0.5;
          for (double angle : orientations(img, static_cast<int>(std::lround(ox)),
                                           static_cast<int>(std::lround(oy)),
                                           cand.octave_scale)) {
            Described item;
            item.kp = cand.kp;
            item.kp.orientation = static_cast<float>(angle);
            if (!describe(img, ox, oy, angle, cand.octave_scale, item.desc)) continue;
            item.kp.x = static_cast<float>((item.kp.x + 0.5) * coord_scale - 0.5);
            item.kp.y = static_cast<float>((item.kp.y + 0.5) * coord_scale - 0.5);
            item.kp.scale = static_cast<float>(item.kp.scale * coord_scale);
            if (item.kp.x < 0 || item.kp.y < 0 || item.kp.x >= raster.width() ||
                item.kp.y >= raster.height()) {
              continue;
            }
            found.push_back(item);
          }
        }
      }
    }
  }

  std::sort(found.begin(), found.end(),
            [](const Described& a, const Described& b) { return stronger(a.kp, b.kp); });
  if (found.size() > cfg.max_keypoints) found.resize(cfg.max_keypoints);

  FeatureSet fs;
  fs.image_id = image_id;
  fs.source = FeatureSource::kClassical;
  fs.max_keypoints = cfg.max_keypoints;
  fs.descriptors = DescriptorMatrix(found.size(), kDescriptorDim);
  fs.keypoints.reserve(found.size());
  for (size_t i = 0; i < found.size(); ++i) {
    fs.keypoints.push_back(found[i].kp);
    std::copy(found[i].desc.begin(), found[i].desc.end(), fs.descriptors.row(i).begin());
  }
  return fs;
}

FeatureSet truncate_features(const FeatureSet& fs, uint32_t max_keypoints) {
  if (max_keypoints < 1) throw Error(ErrorCode::kInvalidArgument, "max_keypoints must be >= 1");
  std::vector<size_t> order(fs.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return stronger(fs.keypoints[a], fs.keypoints[b]);
  });
  const size_t n = std::min<size_t>(order.size(), max_keypoints);
  FeatureSet out;
  out.image_id = fs.image_id;
  out.source = fs.source;
  out.max_keypoints = std::min(fs.max_keypoints, max_keypoints);
  out.descriptors = DescriptorMatrix(n, fs.descriptors.cols);
  for (size_t i = 0; i < n; ++i) {
    out.keypoints.push_back(fs.keypoints[order[i]]);
    const auto src = fs.descriptors.row(order[i]);
    std::copy(src.begin(), src.end(), out.descriptors.row(i).begin());
  }
  return out;
}

FeatureSet import_features(const std::string& path) {
  FeatureSet fs = read_feature_file(path);
  fs.source = FeatureSource::kImported;
  return fs;
}

}  // namespace reid
