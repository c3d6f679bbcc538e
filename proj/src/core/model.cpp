#include "reid/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

namespace reid {

ImageRaster::ImageRaster(int width, int height, int channels,
                         std::vector<float> pixels)
    : width_(width), height_(height), channels_(channels), pixels_(std::move(pixels)) {
  if (width < 1 || height < 1) {
    throw Error(ErrorCode::kInvalidArgument, "raster dimensions must be >= 1");
  }
  if (channels != 1 && channels != 3) {
    throw Error(ErrorCode::kInvalidArgument, "raster channels must be 1 or 3");
  }
  if (pixels_.size() != static_cast<size_t>(width) * height * channels) {
    throw Error(ErrorCode::kInvalidArgument, "raster pixel count mismatch");
  }
  for (float v : pixels_) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw Error(ErrorCode::kInvalidArgument, "raster value outside [0,1]");
    }
  }
}

ImageRaster ImageRaster::filled(int width, int height, int channels, float value) {
  return ImageRaster(width, height, channels,
                     std::vector<float>(static_cast<size_t>(std::max(width, 0)) *
                                            std::max(height, 0) * std::max(channels, 0),
                                        value));
}

CaptureDate CaptureDate::from_ymd(int year, unsigned month, unsigned day) {
  using namespace std::chrono;
  const year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                           std::chrono::day{day}};
  if (!ymd.ok()) throw Error(ErrorCode::kInvalidArgument, "invalid calendar date");
  return CaptureDate(static_cast<int32_t>(sys_days{ymd}.time_since_epoch().count()));
}

CaptureDate CaptureDate::parse(const std::string& text) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(text.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) != 3) {
    throw Error(ErrorCode::kFormat, "bad date '" + text + "', expected YYYY-MM-DD");
  }
  return from_ymd(y, m, d);
}

std::string CaptureDate::iso() const {
  using namespace std::chrono;
  const year_month_day ymd{sys_days{std::chrono::days{days_}}};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

void validate_capture(const CaptureImage& capture) {
  if (capture.rotation_quarter_turns < 0 || capture.rotation_quarter_turns > 3) {
    throw Error(ErrorCode::kInvalidArgument, "rotation_quarter_turns must be 0..3");
  }
  const auto& r = capture.raster;
  if (capture.mask) {
    if (capture.mask->width != r.width() || capture.mask->height != r.height() ||
        capture.mask->bits.size() != static_cast<size_t>(r.width()) * r.height()) {
      throw Error(ErrorCode::kInvalidArgument, "mask shape");
    }
  }
  if (capture.bbox) {
    const auto& b = *capture.bbox;
    if (b.x < 0 || b.y < 0 || b.width < 0 || b.height < 0 ||
        b.x + b.width > r.width() || b.y + b.height > r.height()) {
      throw Error(ErrorCode::kInvalidArgument, "bbox outside raster");
    }
  }
}

void validate_features(const FeatureSet& fs) {
  if (fs.descriptors.rows != fs.keypoints.size()) {
    throw Error(ErrorCode::kInvalidArgument, "descriptor rows != keypoint count");
  }
  if (fs.descriptors.data.size() != fs.descriptors.rows * fs.descriptors.cols) {
    throw Error(ErrorCode::kInvalidArgument, "descriptor payload size mismatch");
  }
  if (fs.keypoints.size() > fs.max_keypoints) {
    throw Error(ErrorCode::kInvalidArgument, "keypoint count exceeds budget");
  }
  for (const auto& kp : fs.keypoints) {
    if (!(kp.scale > 0)) throw Error(ErrorCode::kInvalidArgument, "keypoint scale <= 0");
  }
}

std::string to_string(DecisionAction action) {
  switch (action) {
    case DecisionAction::kAccept: return "accept";
    case DecisionAction::kRejectAllNew: return "reject_all_new";
    case DecisionAction::kDefer: return "defer";
    case DecisionAction::kAppend: return "append";
  }
  return "append";
}

DecisionAction parse_decision_action(const std::string& text) {
  if (text == "accept") return DecisionAction::kAccept;
  if (text == "reject_all_new") return DecisionAction::kRejectAllNew;
  if (text == "defer") return DecisionAction::kDefer;
  if (text == "append") return DecisionAction::kAppend;
  throw Error(ErrorCode::kFormat, "unknown decision action '" + text + "'");
}

const GalleryEntry* Gallery::find(const std::string& image_id) const {
  auto it = entries.find(image_id);
  return it == entries.end() ? nullptr : &it->second;
}

std::vector<Violation> validate_gallery(const Gallery& g) {
  std::vector<Violation> out;
  // image_id -> identities listing it
  std::map<std::string, std::vector<std::string>> owners;

  for (const auto& [identity, images] : g.identities) {
    if (identity.empty()) out.push_back({"identity", "empty identity_id", ""});
    for (const auto& [image_id, date] : images) {
      if (!g.find(image_id)) {
        out.push_back({"image " + image_id, "dangling image_id",
                       "listed under identity " + identity + " but not in entries"});
        continue;
      }
      owners[image_id].push_back(identity);
    }
  }
  for (const auto& [image_id, ids] : owners) {
    if (ids.size() > 1) {
      std::string joined;
      for (const auto& id : ids) joined += (joined.empty() ? "" : ", ") + id;
      out.push_back({"image " + image_id, "identity overlap", "listed under " + joined});
      continue;
    }
    const GalleryEntry& e = *g.find(image_id);
    const CaptureDate date = g.identities.at(ids.front()).at(image_id);
    if (e.capture.identity_id != ids.front()) {
      out.push_back({"image " + image_id, "identity mismatch",
                     "entry label differs from identity index " + ids.front()});
    }
    if (e.capture.capture_date != date) {
      out.push_back({"image " + image_id, "date mismatch",
                     "index date " + date.iso() + " vs entry " + e.capture.capture_date.iso()});
    }
  }

  std::optional<size_t> embed_dim;
  std::map<FeatureSource, size_t> desc_dim;
  for (const auto& [image_id, e] : g.entries) {
    if (e.capture.image_id != image_id) {
      out.push_back({"image " + image_id, "key mismatch", "entry image_id differs from key"});
    }
    if (!e.capture.identity_id) {
      out.push_back({"image " + image_id, "unlabeled entry", "gallery entries need identities"});
    } else if (!owners.contains(image_id)) {
      out.push_back({"image " + image_id, "unindexed image",
                     "labeled " + *e.capture.identity_id + " but absent from identity index"});
    }
    if (e.features) {
      if (e.features->image_id != image_id) {
        out.push_back({"image " + image_id, "feature id mismatch", e.features->image_id});
      }
      if (e.features->size() > 0) {
        auto [it, fresh] = desc_dim.emplace(e.features->source, e.features->descriptors.cols);
        if (!fresh && it->second != e.features->descriptors.cols) {
          out.push_back({"image " + image_id, "descriptor dimension not uniform",
                         std::to_string(e.features->descriptors.cols)});
        }
      }
    }
    if (e.embedding) {
      if (e.embedding->image_id != image_id) {
        out.push_back({"image " + image_id, "embedding id mismatch", e.embedding->image_id});
      }
      if (!embed_dim) {
        embed_dim = e.embedding->vector.size();
      } else if (*embed_dim != e.embedding->vector.size()) {
        out.push_back({"image " + image_id, "embedding dimension not uniform",
                       std::to_string(e.embedding->vector.size())});
      }
    }
  }

  for (size_t i = 1; i < g.decision_log.size(); ++i) {
    if (g.decision_log[i].sequence <= g.decision_log[i - 1].sequence) {
      out.push_back({"decision " + std::to_string(g.decision_log[i].sequence),
                     "decision log order", "sequence numbers must strictly increase"});
    }
  }
  return out;
}

bool same_outcome(const RankedCandidates& a, const RankedCandidates& b) {
  auto same_entry = [](const PooledCandidate& x, const PooledCandidate& y) {
    return x.image_id == y.image_id && x.identity_id == y.identity_id && x.score == y.score &&
           x.scored == y.scored;
  };
  return a.query_image_ids == b.query_image_ids &&
         std::equal(a.stage2.begin(), a.stage2.end(), b.stage2.begin(), b.stage2.end(),
                    same_entry) &&
         a.decision == b.decision && a.threshold_used == b.threshold_used;
}

}  // namespace reid
