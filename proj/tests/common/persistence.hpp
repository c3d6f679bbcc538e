#pragma once

// Randomized operation sequences against a directory-backed gallery. After
// every operation the store is reopened from disk and compared with an
// in-memory model; rejected operations must leave both untouched.

#include <cstring>
#include <sstream>

#include "common/fixtures.hpp"
#include "reid/gallery_store.hpp"

namespace reid::testing {

inline std::string gallery_diff(const Gallery& a, const Gallery& b) {
  std::ostringstream out;
  if (a.identities != b.identities) out << "identities differ; ";
  if (a.decision_log != b.decision_log) out << "decision logs differ; ";
  if (a.entries.size() != b.entries.size()) {
    out << "entry counts " << a.entries.size() << " vs " << b.entries.size() << "; ";
    return out.str();
  }
  for (auto ia = a.entries.begin(), ib = b.entries.begin(); ia != a.entries.end(); ++ia, ++ib) {
    const auto& [id, ea] = *ia;
    const auto& eb = ib->second;
    if (id != ib->first || !(ea.capture == eb.capture)) out << "capture " << id << "; ";
    if (!ea.features != !eb.features || (ea.features && !(*ea.features == *eb.features))) {
      out << "features " << id << "; ";
    }
    if (ea.features && eb.features &&
        std::memcmp(ea.features->descriptors.data.data(), eb.features->descriptors.data.data(),
                    ea.features->descriptors.data.size() * sizeof(float)) != 0) {
      out << "descriptor bits " << id << "; ";
    }
    if (!ea.embedding != !eb.embedding ||
        (ea.embedding && (ea.embedding->vector.size() != eb.embedding->vector.size() ||
                          std::memcmp(ea.embedding->vector.data(), eb.embedding->vector.data(),
                                      ea.embedding->vector.size() * sizeof(float)) != 0))) {
      out << "embedding " << id << "; ";
    }
  }
  return out.str();
}

struct SequenceResult {
  size_t operations = 0;
  size_t rejected = 0;
  std::string failure;  // empty on success
};

// One random sequence in dir. Operations: append to a known identity, append
// as new identity, duplicate image_id, unknown identity, defer decision,
// round trip through save_as into a sibling directory.
inline SequenceResult run_persistence_sequence(const std::filesystem::path& dir, uint64_t seed) {
  namespace fs = std::filesystem;
  SequenceResult res;
  Rng rng(seed);
  fs::remove_all(dir);
  const bool embeddings = rng.uniform() < 0.5;
  const size_t dim = 4 + rng.below(8);
  auto store = GalleryStore::create(dir.string());
  Gallery model;
  int next_image = 0;
  const size_t steps = 3 + rng.below(10);

  auto fail = [&](const std::string& what) {
    res.failure = "seed " + std::to_string(seed) + " step " + std::to_string(res.operations) + ": " + what;
  };
  auto capture = [&](const std::string& id) {
    NewCapture nc;
    nc.capture.image_id = id;
    nc.capture.capture_date = CaptureDate(16000 + static_cast<int>(rng.below(5)));
    nc.capture.rotation_quarter_turns = static_cast<int>(rng.below(4));
    nc.capture.image_path = "uploads/" + id + ".png";
    if (rng.uniform() < 0.5) nc.capture.mask_path = "uploads/" + id + "_mask.png";
    nc.features = random_features(id, rng.below(6), rng.next());
    if (embeddings) nc.embedding = random_embedding(id, dim, rng.next());
    return nc;
  };

  for (size_t step = 0; step < steps && res.failure.empty(); ++step, ++res.operations) {
    const auto before = store->snapshot();
    const uint64_t op = rng.below(model.identities.empty() ? 2 : 6);
    bool expect_reject = false;
    try {
      if (op == 0 || op == 1) {
        const size_t n = 1 + rng.below(3);
        std::vector<NewCapture> batch;
        for (size_t i = 0; i < n; ++i) batch.push_back(capture("img" + std::to_string(next_image++)));
        std::optional<std::string> target;
        if (op == 1 && !model.identities.empty()) {
          auto it = model.identities.begin();
          std::advance(it, rng.below(model.identities.size()));
          target = it->first;
        }
        const auto rec = store->append_captures(batch, target, "q" + std::to_string(step),
                                                target ? DecisionAction::kAccept : DecisionAction::kRejectAllNew,
                                                "tester", "2026-01-01T00:00:00Z");
        const std::string identity = target ? *target : GalleryStore::mint_identity_id(model);
        if (rec.identity_id != identity) fail("identity " + rec.identity_id.value_or("-") + " != " + identity);
        for (auto& nc : batch) {
          GalleryEntry e{nc.capture, nc.features, nc.embedding};
          e.capture.identity_id = identity;
          model.identities[identity][nc.capture.image_id] = nc.capture.capture_date;
          model.entries.emplace(nc.capture.image_id, std::move(e));
        }
        model.decision_log.push_back(rec);
      } else if (op == 2) {
        expect_reject = true;
        auto it = model.entries.begin();
        std::advance(it, rng.below(model.entries.size()));
        auto nc = capture(it->first);
        store->append_capture(nc, model.identities.begin()->first);
      } else if (op == 3) {
        expect_reject = true;
        store->append_capture(capture("img" + std::to_string(next_image++)), std::string("NOPE"));
      } else if (op == 4) {
        model.decision_log.push_back(store->log_decision("q" + std::to_string(step), DecisionAction::kDefer,
                                                         "tester", "2026-01-01T00:00:00Z"));
      } else {
        const fs::path copy = dir.string() + "_copy";
        fs::remove_all(copy);
        auto saved = GalleryStore::save_as(*store->snapshot(), copy.string());
        const std::string d = gallery_diff(*GalleryStore::open(copy.string())->snapshot(), *store->snapshot());
        if (!d.empty()) fail("save_as round trip: " + d);
        fs::remove_all(copy);
      }
      if (expect_reject) fail("operation " + std::to_string(op) + " was accepted");
    } catch (const Error& e) {
      if (!expect_reject) {
        fail(std::string("unexpected error: ") + e.what());
      } else {
        ++res.rejected;
        if (store->snapshot() != before) fail("rejected operation replaced the snapshot");
      }
    }
    if (!res.failure.empty()) break;
    const std::string mem = gallery_diff(*store->snapshot(), model);
    if (!mem.empty()) fail("store vs model: " + mem);
    const std::string disk = gallery_diff(*GalleryStore::open(dir.string())->snapshot(), model);
    if (!disk.empty()) fail("disk vs model: " + disk);
    if (!validate_gallery(model).empty()) fail("model invalid");
  }
  fs::remove_all(dir);
  return res;
}

}  // namespace reid::testing
