// Command-line front end; talks to the engine only through reid.h.

#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "reid/reid.h"

namespace {

constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

struct Failure {
  int exit_code;
  std::string message;
};

void check(reid_status s, const std::string& what) {
  if (s == REID_OK) return;
  throw Failure{s == REID_INVALID_ARGUMENT ? kExitUsage : kExitDomain,
                what + ": " + reid_status_name(s) + ": " + reid_last_error()};
}

// Owns a string returned by the library.
std::string take(char* s) {
  std::string out = s ? s : "";
  reid_free(s);
  return out;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Failure{kExitDomain, "cannot write " + path};
}

struct Context {
  reid_context* ctx = nullptr;
  ~Context() { reid_context_destroy(ctx); }
  void set(const std::string& key, const std::string& value) {
    check(reid_context_set(ctx, key.c_str(), value.c_str()), "--" + key);
  }
};

struct Gallery {
  reid_gallery* g = nullptr;
  explicit Gallery(const std::string& dir) { check(reid_gallery_open(dir.c_str(), &g), "open " + dir); }
  ~Gallery() { reid_gallery_close(g); }
};

std::string join_list(const std::vector<size_t>& xs) {
  std::string out = "[";
  for (size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + std::to_string(xs[i]);
  return out + "]";
}

std::string as_toml_string(const std::string& s) { return "\"" + s + "\""; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Re-identification of patterned animals: features, matching, evaluation, gallery"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  std::optional<uint64_t> seed;
  std::string config_path;
  unsigned threads = 0;
  std::vector<std::string> overrides;
  app.add_option("--seed", seed, "Root seed for matching and synthesis");
  app.add_option("--config", config_path, "Config file ([section] key = value)")->check(CLI::ExistingFile);
  app.add_option("--threads", threads, "Worker threads (0: all cores)");
  app.add_option("--set", overrides, "Override one config value, section.key=value")->take_all();

  // extract
  auto* extract = app.add_subcommand("extract", "Detect keypoints and descriptors");
  std::string ex_image, ex_mask, ex_id, ex_out, ex_manifest, ex_features, ex_embeddings;
  int ex_rotation = 0;
  std::optional<uint32_t> ex_budget;
  extract->add_option("--image", ex_image, "Single image");
  extract->add_option("--mask", ex_mask, "Foreground mask for --image");
  extract->add_option("--rotation", ex_rotation, "Quarter turns restoring head-up")->check(CLI::Range(0, 3));
  extract->add_option("--id", ex_id, "image_id (default: file stem)");
  extract->add_option("--out", ex_out, "Feature file for --image");
  extract->add_option("--manifest", ex_manifest, "Extract every manifest row");
  extract->add_option("--features-dir", ex_features, "Output directory for --manifest");
  extract->add_option("--embeddings", ex_embeddings, "Also write thumbnail embeddings here");
  extract->add_option("--max-keypoints", ex_budget, "Keypoint budget M");

  // import-features
  auto* import_features = app.add_subcommand("import-features", "Validate adapter feature files");
  std::vector<std::string> if_files;
  std::string if_out;
  import_features->add_option("files", if_files, "Feature files (.ridf)")->required()->check(CLI::ExistingFile);
  import_features->add_option("--out-dir", if_out, "Destination directory")->required();

  // import-embeddings
  auto* import_embeddings = app.add_subcommand("import-embeddings", "Validate and normalize embeddings");
  std::string ie_in, ie_out;
  import_embeddings->add_option("input", ie_in, "Embedding file (.ride)")->required()->check(CLI::ExistingFile);
  import_embeddings->add_option("--out", ie_out, "Normalized embedding file")->required();

  // match
  auto* match = app.add_subcommand("match", "Match similarity of two feature files");
  std::string m_a, m_b, m_out, m_import, m_mode;
  match->add_option("--a", m_a, "Feature file A");
  match->add_option("--b", m_b, "Feature file B");
  match->add_option("--out", m_out, "Write correspondences (.ridm)");
  match->add_option("--import", m_import, "Count correspondences of an adapter match file");
  match->add_option("--mode", m_mode, "raw_count or ransac_inlier_count");

  // identify
  auto* identify = app.add_subcommand("identify", "Rank gallery images for one query");
  std::string id_gallery, id_date, id_out, id_stage1_out, id_mode;
  std::vector<std::string> id_images, id_masks;
  std::vector<int> id_rotations;
  std::optional<size_t> id_k;
  std::optional<double> id_tau;
  bool id_exhaustive = false, id_exclude_same_date = false;
  identify->add_option("--gallery", id_gallery, "Gallery directory")->required();
  identify->add_option("--image", id_images, "Query image (repeatable)")->required()->check(CLI::ExistingFile);
  identify->add_option("--mask", id_masks, "Mask per query image");
  identify->add_option("--rotation", id_rotations, "Quarter turns per query image");
  identify->add_option("--date", id_date, "Capture date of the query, YYYY-MM-DD");
  identify->add_option("--k", id_k, "Stage-1 shortlist size");
  identify->add_option("--tau", id_tau, "Open-set threshold");
  identify->add_option("--mode", id_mode, "raw_count or ransac_inlier_count");
  identify->add_flag("--exhaustive", id_exhaustive, "Match every gallery image, no stage 1");
  identify->add_flag("--exclude-same-date", id_exclude_same_date, "Skip gallery images from the query date");
  identify->add_option("--out", id_out, "Ranking JSON (default: stdout)");
  identify->add_option("--stage1-out", id_stage1_out, "Stage-1 shortlists JSON");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "Closed-set protocol, PR curve and histograms");
  std::string ev_gallery, ev_out = "eval", ev_mode, ev_sweep, ev_split;
  std::vector<size_t> ev_k_list;
  std::optional<size_t> ev_k;
  bool ev_exhaustive = false, ev_two_stage = false, ev_stage1_only = false;
  evaluate->add_option("--gallery", ev_gallery, "Corpus or gallery directory")->required();
  evaluate->add_option("--mode", ev_mode, "raw_count or ransac_inlier_count");
  evaluate->add_option("--k-list", ev_k_list, "Top-k cutoffs")->delimiter(',');
  evaluate->add_option("--k", ev_k, "Stage-1 shortlist size for --two-stage");
  evaluate->add_flag("--exhaustive", ev_exhaustive, "Local matching against every reference (default)");
  evaluate->add_flag("--two-stage", ev_two_stage, "Stage-1 shortlist then local re-ranking");
  evaluate->add_flag("--stage1-only", ev_stage1_only, "Rank by embedding cosine only");
  evaluate->add_option("--out", ev_out, "Output directory");
  evaluate->add_option("--sweep", ev_sweep, "Keypoint-budget sweep CSV");
  evaluate->add_option("--split-out", ev_split, "Stratified identity split CSV");

  // calibrate
  auto* calibrate = app.add_subcommand("calibrate", "Open-set threshold for a precision or recall target");
  std::string ca_pairs, ca_target, ca_pr_out, ca_gallery, ca_name, ca_mode = "ransac_inlier_count";
  calibrate->add_option("--pairs", ca_pairs, "pairs.csv from evaluate --exhaustive")->required();
  calibrate->add_option("--target", ca_target, "recall:0.95 or precision:0.95")->required();
  calibrate->add_option("--pr-out", ca_pr_out, "Write the PR curve");
  calibrate->add_option("--gallery", ca_gallery, "Store the threshold in this gallery");
  calibrate->add_option("--name", ca_name, "Threshold name (default: the target)");
  calibrate->add_option("--mode", ca_mode, "Similarity mode the pairs were scored with");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  std::optional<int> sy_identities, sy_sessions, sy_images, sy_size;
  std::optional<double> sy_amplitude;
  std::string sy_out;
  synth->add_option("--identities", sy_identities, "Number of identities");
  synth->add_option("--sessions", sy_sessions, "Sessions (dates) per identity");
  synth->add_option("--images", sy_images, "Images per session");
  synth->add_option("--amplitude", sy_amplitude, "Nonrigid deformation, fraction of body length");
  synth->add_option("--image-size", sy_size, "Pixels per side");
  synth->add_option("--out", sy_out, "Output directory")->required();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Build a gallery directory from a manifest");
  std::string in_manifest, in_features, in_embeddings, in_out;
  ingest->add_option("--manifest", in_manifest, "Manifest CSV")->required();
  ingest->add_option("--features-dir", in_features, "Directory of <image_id>.ridf")->required();
  ingest->add_option("--embeddings", in_embeddings, "Embedding file");
  ingest->add_option("--out", in_out, "Gallery directory")->required();

  // report
  auto* report = app.add_subcommand("report", "Identities and their observed dates");
  std::string re_gallery, re_out;
  report->add_option("--gallery", re_gallery, "Gallery directory")->required();
  report->add_option("--out", re_out, "CSV file (default: stdout)");

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP service for review clients");
  std::string se_gallery, se_host, se_token, se_static;
  std::optional<int> se_port;
  serve->add_option("--gallery", se_gallery, "Gallery directory")->required();
  serve->add_option("--host", se_host, "Listen address");
  serve->add_option("--port", se_port, "Listen port (0: any)");
  serve->add_option("--token", se_token, "Shared X-Reid-Token value");
  serve->add_option("--static", se_static, "Directory served at /");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    reid_set_threads(threads);
    Context c;
    check(reid_context_create(config_path.empty() ? nullptr : config_path.c_str(), &c.ctx), "config");
    for (const auto& o : overrides) {
      const auto eq = o.find('=');
      if (eq == std::string::npos) throw Failure{kExitUsage, "--set expects section.key=value"};
      c.set(o.substr(0, eq), o.substr(eq + 1));
    }
    if (seed) check(reid_context_set_seed(c.ctx, *seed), "--seed");

    if (*extract) {
      if (ex_budget) c.set("detector.max_keypoints", std::to_string(*ex_budget));
      if (!ex_manifest.empty()) {
        if (ex_features.empty()) throw Failure{kExitUsage, "--manifest needs --features-dir"};
        size_t n = 0;
        check(reid_extract_manifest(c.ctx, ex_manifest.c_str(), ex_features.c_str(),
                                    ex_embeddings.empty() ? nullptr : ex_embeddings.c_str(), &n),
              "extract");
        std::cout << n << " images\n";
      } else {
        if (ex_image.empty() || ex_out.empty()) {
          throw Failure{kExitUsage, "extract needs --image and --out, or --manifest"};
        }
        check(reid_extract(c.ctx, ex_image.c_str(), ex_mask.empty() ? nullptr : ex_mask.c_str(),
                           ex_rotation, ex_id.empty() ? nullptr : ex_id.c_str(), ex_out.c_str()),
              "extract");
      }
    } else if (*import_features) {
      for (const auto& f : if_files) {
        char* id = nullptr;
        check(reid_import_features(f.c_str(), if_out.c_str(), &id), f);
        std::cout << take(id) << "\n";
      }
    } else if (*import_embeddings) {
      size_t n = 0;
      check(reid_import_embeddings(ie_in.c_str(), ie_out.c_str(), &n), ie_in);
      std::cout << n << " embeddings\n";
    } else if (*match) {
      uint32_t similarity = 0;
      if (!m_mode.empty()) c.set("match.similarity_mode", as_toml_string(m_mode));
      if (!m_import.empty()) {
        check(reid_import_matches(m_import.c_str(), &similarity), m_import);
      } else {
        if (m_a.empty() || m_b.empty()) throw Failure{kExitUsage, "match needs --a and --b, or --import"};
        check(reid_match_files(c.ctx, m_a.c_str(), m_b.c_str(), m_out.empty() ? nullptr : m_out.c_str(),
                               &similarity),
              "match");
      }
      std::cout << similarity << "\n";
    } else if (*identify) {
      if (!id_masks.empty() && id_masks.size() != id_images.size()) {
        throw Failure{kExitUsage, "give one --mask per --image"};
      }
      if (!id_rotations.empty() && id_rotations.size() != id_images.size()) {
        throw Failure{kExitUsage, "give one --rotation per --image"};
      }
      if (id_k) c.set("pipeline.k", std::to_string(*id_k));
      if (id_tau) c.set("pipeline.open_set_threshold", std::to_string(*id_tau));
      if (!id_mode.empty()) c.set("match.similarity_mode", as_toml_string(id_mode));
      std::vector<reid_query_image> qs;
      for (size_t i = 0; i < id_images.size(); ++i) {
        qs.push_back({id_images[i].c_str(), id_masks.empty() ? nullptr : id_masks[i].c_str(),
                      id_date.empty() ? nullptr : id_date.c_str(),
                      id_rotations.empty() ? 0 : id_rotations[i]});
      }
      Gallery g(id_gallery);
      reid_ranking* r = nullptr;
      check(reid_identify(c.ctx, g.g, qs.data(), qs.size(), id_exhaustive, id_exclude_same_date, &r),
            "identify");
      char* text = nullptr;
      const reid_status s = reid_ranking_json(r, &text);
      char* stage1 = nullptr;
      const reid_status s1 = id_stage1_out.empty() ? REID_OK : reid_ranking_stage1_json(r, &stage1);
      reid_ranking_destroy(r);
      check(s, "identify");
      check(s1, "identify");
      const std::string json = take(text);
      if (id_out.empty()) {
        std::cout << json;
      } else {
        write_text(id_out, json);
      }
      if (!id_stage1_out.empty()) write_text(id_stage1_out, take(stage1));
    } else if (*evaluate) {
      if (!ev_mode.empty()) c.set("match.similarity_mode", as_toml_string(ev_mode));
      if (!ev_k_list.empty()) c.set("eval.k_list", join_list(ev_k_list));
      if (ev_k) c.set("pipeline.k", std::to_string(*ev_k));
      if (ev_stage1_only) {
        c.set("pipeline.stage2_enabled", "false");
        ev_two_stage = true;
      }
      if (!ev_two_stage) ev_exhaustive = true;
      char* summary = nullptr;
      check(reid_evaluate(c.ctx, ev_gallery.c_str(), ev_out.c_str(), ev_exhaustive, ev_two_stage, &summary),
            "evaluate");
      std::cout << take(summary);
      if (!ev_sweep.empty()) {
        check(reid_keypoint_sweep(c.ctx, ev_gallery.c_str(), ev_sweep.c_str(), 0), "sweep");
      }
      if (!ev_split.empty()) {
        size_t n = 0;
        const std::string manifest = ev_gallery + "/manifest.csv";
        check(reid_split(c.ctx, manifest.c_str(), ev_split.c_str(), &n), "split");
        std::cout << "validation identities: " << n << "\n";
      }
    } else if (*calibrate) {
      const auto colon = ca_target.find(':');
      const std::string metric = ca_target.substr(0, colon);
      if (colon == std::string::npos || (metric != "recall" && metric != "precision")) {
        throw Failure{kExitUsage, "--target must be recall:<x> or precision:<x>"};
      }
      double value = 0;
      try {
        value = std::stod(ca_target.substr(colon + 1));
      } catch (const std::exception&) {
        throw Failure{kExitUsage, "--target value is not a number"};
      }
      double tau = 0, precision = 0, recall = 0;
      check(reid_calibrate(ca_pairs.c_str(), metric == "recall" ? REID_TARGET_RECALL : REID_TARGET_PRECISION,
                           value, ca_pr_out.empty() ? nullptr : ca_pr_out.c_str(), &tau, &precision, &recall),
            "calibrate");
      std::cout << "threshold " << tau << "\nprecision " << precision << "\nrecall " << recall << "\n";
      if (!ca_gallery.empty()) {
        Gallery g(ca_gallery);
        const std::string name = ca_name.empty() ? ca_target : ca_name;
        check(reid_gallery_set_threshold(g.g, ca_mode.c_str(), name.c_str(), tau), "store threshold");
      }
    } else if (*synth) {
      if (sy_identities) c.set("synth.identities", std::to_string(*sy_identities));
      if (sy_sessions) c.set("synth.sessions", std::to_string(*sy_sessions));
      if (sy_images) c.set("synth.images", std::to_string(*sy_images));
      if (sy_amplitude) c.set("synth.deformation_amplitude", std::to_string(*sy_amplitude));
      if (sy_size) c.set("synth.image_size", std::to_string(*sy_size));
      size_t n = 0;
      check(reid_synth(c.ctx, sy_out.c_str(), &n), "synth");
      std::cout << n << " images\n";
    } else if (*ingest) {
      size_t n = 0;
      check(reid_gallery_ingest(in_manifest.c_str(), in_features.c_str(),
                                in_embeddings.empty() ? nullptr : in_embeddings.c_str(), in_out.c_str(), &n),
            "ingest");
      std::cout << n << " images\n";
    } else if (*report) {
      Gallery g(re_gallery);
      char* csv = nullptr;
      check(reid_gallery_report(g.g, &csv), "report");
      const std::string text = take(csv);
      if (re_out.empty()) {
        std::cout << text;
      } else {
        write_text(re_out, text);
      }
    } else if (*serve) {
      if (!se_host.empty()) c.set("service.host", as_toml_string(se_host));
      if (se_port) c.set("service.port", std::to_string(*se_port));
      if (!se_token.empty()) c.set("service.token", as_toml_string(se_token));
      // Block the stop signals before any server thread exists, then wait for one.
      sigset_t stop_signals;
      sigemptyset(&stop_signals);
      sigaddset(&stop_signals, SIGINT);
      sigaddset(&stop_signals, SIGTERM);
      pthread_sigmask(SIG_BLOCK, &stop_signals, nullptr);
      reid_server* server = nullptr;
      check(reid_server_start(c.ctx, se_gallery.c_str(), se_static.empty() ? nullptr : se_static.c_str(),
                              &server),
            "serve");
      std::cout << "listening on port " << reid_server_port(server) << std::endl;
      int sig = 0;
      sigwait(&stop_signals, &sig);
      reid_server_stop(server);
      reid_server_destroy(server);
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    if (f.exit_code == kExitUsage) std::cerr << "\n" << app.help();
    return f.exit_code;
  }
  return 0;
}
