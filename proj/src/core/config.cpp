#include "reid/config.hpp"

#include <charconv>
#include <functional>
#include <map>
#include <sstream>

#include "reid/formats.hpp"

namespace reid {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* want) {
  throw Error(ErrorCode::kInvalidArgument, key + ": expected " + want + ", got '" + value + "'");
}

double as_double(const std::string& key, const std::string& v) {
  double out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a number");
  return out;
}

int64_t as_int(const std::string& key, const std::string& v) {
  int64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "an integer");
  return out;
}

uint64_t as_uint(const std::string& key, const std::string& v) {
  uint64_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad_value(key, v, "a nonnegative integer");
  return out;
}

bool as_bool(const std::string& key, const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  bad_value(key, v, "true or false");
}

std::string as_string(const std::string& key, const std::string& v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return v.substr(1, v.size() - 2);
  if (v.find_first_of(" \t\"[]=") != std::string::npos) bad_value(key, v, "a string");
  return v;
}

std::vector<std::string> as_list(const std::string& key, const std::string& v) {
  std::string body = v;
  if (body.size() >= 2 && body.front() == '[' && body.back() == ']') {
    body = body.substr(1, body.size() - 2);
  }
  std::vector<std::string> out;
  std::stringstream ss(body);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) bad_value(key, v, "a list");
    out.push_back(item);
  }
  return out;
}

std::string quote(const std::string& s) { return "\"" + s + "\""; }

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out = "[";
  for (size_t i = 0; i < xs.size(); ++i) out += (i ? ", " : "") + std::to_string(xs[i]);
  return out + "]";
}

struct Key {
  std::function<void(AppConfig&, const std::string& key, const std::string& value)> set;
  std::function<std::string(const AppConfig&)> get;
};

#define REID_DOUBLE(path) \
  Key{[](AppConfig& c, const std::string& k, const std::string& v) { c.path = as_double(k, v); }, \
      [](const AppConfig& c) { return num(c.path); }}
#define REID_INT(path) \
  Key{[](AppConfig& c, const std::string& k, const std::string& v) { \
        c.path = static_cast<decltype(c.path)>(as_int(k, v)); }, \
      [](const AppConfig& c) { return std::to_string(c.path); }}
#define REID_UINT(path) \
  Key{[](AppConfig& c, const std::string& k, const std::string& v) { \
        c.path = static_cast<decltype(c.path)>(as_uint(k, v)); }, \
      [](const AppConfig& c) { return std::to_string(c.path); }}
#define REID_BOOL(path) \
  Key{[](AppConfig& c, const std::string& k, const std::string& v) { c.path = as_bool(k, v); }, \
      [](const AppConfig& c) { return std::string(c.path ? "true" : "false"); }}
#define REID_STRING(path) \
  Key{[](AppConfig& c, const std::string& k, const std::string& v) { c.path = as_string(k, v); }, \
      [](const AppConfig& c) { return quote(c.path); }}

const std::map<std::string, Key>& registry() {
  static const std::map<std::string, Key> keys = {
      {"preprocess.target_size", REID_INT(preprocess.target_size)},
      {"preprocess.zoom_factor", REID_DOUBLE(preprocess.zoom_factor)},
      {"preprocess.mask_fill", REID_DOUBLE(preprocess.mask_fill)},
      {"preprocess.normalize_mean",
       Key{[](AppConfig& c, const std::string& k, const std::string& v) {
             c.preprocess.normalize_mean.clear();
             for (const auto& x : as_list(k, v)) c.preprocess.normalize_mean.push_back(as_double(k, x));
           },
           [](const AppConfig& c) {
             std::string out = "[";
             for (size_t i = 0; i < c.preprocess.normalize_mean.size(); ++i) {
               out += (i ? ", " : "") + num(c.preprocess.normalize_mean[i]);
             }
             return out + "]";
           }}},
      {"preprocess.normalize_std",
       Key{[](AppConfig& c, const std::string& k, const std::string& v) {
             c.preprocess.normalize_std.clear();
             for (const auto& x : as_list(k, v)) c.preprocess.normalize_std.push_back(as_double(k, x));
           },
           [](const AppConfig& c) {
             std::string out = "[";
             for (size_t i = 0; i < c.preprocess.normalize_std.size(); ++i) {
               out += (i ? ", " : "") + num(c.preprocess.normalize_std[i]);
             }
             return out + "]";
           }}},

      {"detector.max_keypoints",
       Key{[](AppConfig& c, const std::string& k, const std::string& v) {
             c.detector.max_keypoints =
                 v == "unlimited" || v == "\"unlimited\"" ? kUnlimitedKeypoints
                                                          : static_cast<uint32_t>(as_uint(k, v));
           },
           [](const AppConfig& c) {
             return c.detector.max_keypoints == kUnlimitedKeypoints
                        ? std::string("\"unlimited\"")
                        : std::to_string(c.detector.max_keypoints);
           }}},
      {"detector.contrast_threshold", REID_DOUBLE(detector.contrast_threshold)},
      {"detector.edge_threshold", REID_DOUBLE(detector.edge_threshold)},
      {"detector.n_octaves", REID_INT(detector.n_octaves)},
      {"detector.scales_per_octave", REID_INT(detector.scales_per_octave)},
      {"detector.sigma", REID_DOUBLE(detector.sigma)},
      {"detector.upsample", REID_BOOL(detector.upsample)},

      {"match.ratio", REID_DOUBLE(pipeline.match.ratio)},
      {"match.ransac_iterations", REID_UINT(pipeline.match.ransac_iterations)},
      {"match.inlier_threshold_px", REID_DOUBLE(pipeline.match.inlier_threshold_px)},
      {"match.min_matches_for_ransac", REID_UINT(pipeline.match.min_matches_for_ransac)},
      {"match.similarity_mode",
       Key{[](AppConfig& c, const std::string& k, const std::string& v) {
             c.pipeline.match.similarity_mode = parse_similarity_mode(as_string(k, v));
           },
           [](const AppConfig& c) { return quote(to_string(c.pipeline.match.similarity_mode)); }}},
      {"match.mutual", REID_BOOL(pipeline.match.mutual)},

      {"pipeline.k", REID_UINT(pipeline.k)},
      {"pipeline.open_set_threshold", REID_DOUBLE(pipeline.open_set_threshold)},
      {"pipeline.stage2_enabled", REID_BOOL(pipeline.stage2_enabled)},
      {"pipeline.root_seed", REID_UINT(pipeline.root_seed)},

      {"embedding.size", REID_INT(embedding.size)},
      {"embedding.zoom_factor", REID_DOUBLE(embedding.zoom_factor)},
      {"embedding.blur_sigma", REID_DOUBLE(embedding.blur_sigma)},

      {"service.host", REID_STRING(service.host)},
      {"service.port", REID_INT(service.port)},
      {"service.token", REID_STRING(service.token)},
      {"service.max_upload_bytes", REID_UINT(service.max_upload_bytes)},
      {"service.workers", REID_UINT(service.workers)},
      {"service.threshold_name", REID_STRING(service.threshold_name)},

      {"synth.identities", REID_INT(synth.n_identities)},
      {"synth.sessions", REID_INT(synth.sessions_per_identity)},
      {"synth.images", REID_INT(synth.images_per_session)},
      {"synth.seed", REID_UINT(synth.base_seed)},
      {"synth.deformation_amplitude", REID_DOUBLE(synth.session.deformation_amplitude)},
      {"synth.rotation_jitter", REID_DOUBLE(synth.session.rotation_jitter)},
      {"synth.scale_jitter", REID_DOUBLE(synth.session.scale_jitter)},
      {"synth.translation_jitter", REID_DOUBLE(synth.session.translation_jitter)},
      {"synth.gain_jitter", REID_DOUBLE(synth.session.gain_jitter)},
      {"synth.bias_jitter", REID_DOUBLE(synth.session.bias_jitter)},
      {"synth.noise_sigma", REID_DOUBLE(synth.session.noise_sigma)},
      {"synth.background_seed", REID_UINT(synth.session.background_seed)},
      {"synth.image_size", REID_INT(synth.session.image_size)},

      {"eval.k_list",
       Key{[](AppConfig& c, const std::string& k, const std::string& v) {
             c.eval.k_list.clear();
             for (const auto& x : as_list(k, v)) c.eval.k_list.push_back(as_uint(k, x));
           },
           [](const AppConfig& c) { return join(c.eval.k_list); }}},
      {"eval.histogram_bin_width", REID_DOUBLE(eval.histogram_bin_width)},
      {"eval.split_fraction", REID_DOUBLE(eval.split_fraction)},
      {"eval.keypoint_budgets",
       Key{[](AppConfig& c, const std::string& k, const std::string& v) {
             c.eval.keypoint_budgets.clear();
             for (const auto& x : as_list(k, v)) {
               c.eval.keypoint_budgets.push_back(static_cast<uint32_t>(as_uint(k, x)));
             }
           },
           [](const AppConfig& c) { return join(c.eval.keypoint_budgets); }}},
  };
  return keys;
}

#undef REID_DOUBLE
#undef REID_INT
#undef REID_UINT
#undef REID_BOOL
#undef REID_STRING

}  // namespace

void AppConfig::set(const std::string& dotted_key, const std::string& value) {
  const auto& keys = registry();
  auto it = keys.find(dotted_key);
  if (it == keys.end()) throw Error(ErrorCode::kInvalidArgument, "unknown config key " + dotted_key);
  it->second.set(*this, dotted_key, trim(value));
}

void AppConfig::validate() const {
  preprocess.validate();
  detector.validate();
  pipeline.validate();
  embedding.validate();
  synth.session.validate();
  if (synth.n_identities < 1 || synth.sessions_per_identity < 1 || synth.images_per_session < 1) {
    throw Error(ErrorCode::kInvalidArgument, "synth counts must be >= 1");
  }
  if (service.port < 0 || service.port > 65535) {
    throw Error(ErrorCode::kInvalidArgument, "service.port out of range");
  }
  if (service.workers < 1) throw Error(ErrorCode::kInvalidArgument, "service.workers must be >= 1");
  for (size_t k : eval.k_list) {
    if (k < 1) throw Error(ErrorCode::kInvalidArgument, "eval.k_list entries must be >= 1");
  }
  if (!(eval.histogram_bin_width > 0)) {
    throw Error(ErrorCode::kInvalidArgument, "eval.histogram_bin_width must be > 0");
  }
  if (!(eval.split_fraction > 0 && eval.split_fraction < 1)) {
    throw Error(ErrorCode::kInvalidArgument, "eval.split_fraction must be in (0, 1)");
  }
}

AppConfig parse_config(const std::string& text) {
  AppConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    // Comments end the line unless inside a quoted string.
    bool quoted = false;
    for (size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.resize(i);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(n) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw Error(ErrorCode::kInvalidArgument, where + "bad section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::kInvalidArgument, where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw Error(ErrorCode::kInvalidArgument, where + "key outside a section");
    try {
      cfg.set(section + "." + key, value);
    } catch (const Error& e) {
      throw Error(ErrorCode::kInvalidArgument, where + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

AppConfig load_config(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  return parse_config(std::string(bytes.begin(), bytes.end()));
}

std::string format_config(const AppConfig& config) {
  std::string out, section;
  for (const auto& [key, k] : registry()) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      out += (out.empty() ? "[" : "\n[") + s + "]\n";
      section = s;
    }
    out += key.substr(dot + 1) + " = " + k.get(config) + "\n";
  }
  return out;
}

}  // namespace reid
