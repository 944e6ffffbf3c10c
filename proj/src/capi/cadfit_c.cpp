#include "cadfit/cadfit.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <mutex>
#include <set>
#include <string>

#include <nlohmann/json.hpp>

#include "cadfit/error.hpp"
#include "cadfit/eval.hpp"
#include "cadfit/hoc_tree.hpp"
#include "cadfit/pipeline.hpp"
#include "cadfit/review.hpp"
#include "cadfit/synth.hpp"

using json = nlohmann::json;
using cadfit::Error;
using cadfit::ErrorCode;

struct cadfit_database {
  std::shared_ptr<const cadfit::CadDatabase> db;
};
struct cadfit_trees {
  cadfit::TreeSet trees;
};
struct cadfit_scene {
  cadfit::Scene scene;
};
struct cadfit_service {
  std::unique_ptr<cadfit::ReviewService> service;
  std::mutex mutex;
  cadfit::ReviewServer* running = nullptr;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_detail;

cadfit_status to_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return CADFIT_E_INVALID_ARGUMENT;
    case ErrorCode::degenerate: return CADFIT_E_DEGENERATE;
    case ErrorCode::parse_error: return CADFIT_E_PARSE;
    case ErrorCode::io_error: return CADFIT_E_IO;
    case ErrorCode::not_found: return CADFIT_E_NOT_FOUND;
    case ErrorCode::size_limit: return CADFIT_E_SIZE_LIMIT;
    case ErrorCode::unobservable: return CADFIT_E_UNOBSERVABLE;
    case ErrorCode::numeric: return CADFIT_E_NUMERIC;
    case ErrorCode::invalid_state: return CADFIT_E_INVALID_STATE;
    case ErrorCode::conflict: return CADFIT_E_CONFLICT;
  }
  return CADFIT_E_INTERNAL;
}

template <class Fn>
cadfit_status guarded(Fn&& fn) {
  g_error.clear();
  g_detail.clear();
  try {
    fn();
    return CADFIT_OK;
  } catch (const Error& e) {
    g_error = e.what();
    g_detail = e.detail();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_error = "out of memory";
    return CADFIT_E_INTERNAL;
  } catch (const std::exception& e) {
    g_error = e.what();
    return CADFIT_E_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw Error(ErrorCode::invalid_argument, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

// Reads known keys of a JSON options object and rejects the rest.
class Options {
 public:
  explicit Options(const char* text, std::string scope = "options") : scope_(std::move(scope)) {
    if (text && *text) {
      try {
        j_ = json::parse(text);
      } catch (const json::parse_error& e) {
        throw Error(ErrorCode::parse_error, "malformed " + scope_ + " JSON", "offset " + std::to_string(e.byte));
      }
    } else {
      j_ = json::object();
    }
    if (!j_.is_object()) throw Error(ErrorCode::invalid_argument, scope_ + " must be a JSON object");
  }
  Options(json j, std::string scope) : j_(std::move(j)), scope_(std::move(scope)) {
    if (!j_.is_object()) throw Error(ErrorCode::invalid_argument, scope_ + " must be a JSON object");
  }

  template <class T>
  void read(const char* key, T& target) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      target = it->get<T>();
    } catch (const json::exception&) {
      throw Error(ErrorCode::invalid_argument, "bad type for " + scope_ + " key", key);
    }
  }

  std::optional<Options> child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return std::nullopt;
    return Options(*it, scope_ + "." + key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw Error(ErrorCode::invalid_argument, "unknown " + scope_ + " key", k);
    }
  }

 private:
  json j_;
  std::string scope_;
  std::set<std::string> seen_;
};

void read_weights(Options& o, cadfit::RcWeights& w) {
  if (auto c = o.child("weights")) {
    c->read("depth", w.depth);
    c->read("silhouette", w.silhouette);
    c->read("chamfer", w.chamfer);
    c->finish();
  }
}

cadfit::PipelineConfig pipeline_config(const char* text) {
  cadfit::PipelineConfig cfg;
  Options o(text);
  o.read("seed", cfg.seed);
  o.read("threads", cfg.threads);
  o.read("max_points", cfg.max_points);
  o.read("final_refine_steps", cfg.final_refine_steps);
  read_weights(o, cfg.weights);
  if (auto s = o.child("search")) {
    s->read("max_iterations", cfg.search.max_iterations);
    s->read("exploration_c", cfg.search.exploration_c);
    s->read("refine_trigger_ratio", cfg.search.refine_trigger_ratio);
    s->read("refine_steps", cfg.search.refine_steps);
    s->read("skip_exhausted", cfg.search.skip_exhausted);
    s->finish();
  }
  if (auto c = o.child("clone")) {
    c->read("enabled", cfg.clone.enabled);
    c->read("tau", cfg.clone.tau);
    c->finish();
  }
  o.finish();
  cfg.validate();
  return cfg;
}

cadfit::TreeConfig tree_config(const char* text) {
  cadfit::TreeConfig cfg;
  Options o(text);
  o.read("pose_bins", cfg.pose_bins);
  o.read("branching", cfg.branching);
  o.read("max_depth", cfg.max_depth);
  o.read("cluster_samples", cfg.cluster_samples);
  o.finish();
  cfg.validate();
  return cfg;
}

cadfit::SynthDatabaseOptions synth_db_options(const char* text) {
  cadfit::SynthDatabaseOptions opt;
  Options o(text);
  o.read("classes", opt.classes);
  o.read("models_per_class", opt.models_per_class);
  o.read("family_size", opt.family_size);
  o.read("family_jitter", opt.family_jitter);
  o.read("seed", opt.seed);
  o.read("samples", opt.samples);
  o.finish();
  return opt;
}

cadfit::SynthSceneOptions synth_scene_options(const char* text) {
  cadfit::SynthSceneOptions opt;
  Options o(text);
  o.read("scene_id", opt.scene_id);
  o.read("objects", opt.objects);
  o.read("views_per_object", opt.views_per_object);
  o.read("width", opt.width);
  o.read("height", opt.height);
  o.read("horizontal_fov_deg", opt.horizontal_fov_deg);
  o.read("camera_distance", opt.camera_distance);
  o.read("camera_elevation_deg", opt.camera_elevation_deg);
  o.read("scale_jitter", opt.scale_jitter);
  o.read("min_gap", opt.min_gap);
  o.read("seed", opt.seed);
  o.read("classes", opt.classes);
  o.read("cad_ids", opt.cad_ids);
  o.finish();
  return opt;
}

cadfit::AlignmentThresholds thresholds(const char* text) {
  cadfit::AlignmentThresholds t;
  Options o(text);
  o.read("translation_max", t.translation_max);
  o.read("rotation_max_deg", t.rotation_max_deg);
  o.read("scale_ratio_max", t.scale_ratio_max);
  std::string mode = "max_axis";
  o.read("scale_mode", mode);
  o.finish();
  if (mode == "max_axis") {
    t.scale_mode = cadfit::ScaleErrorMode::max_axis;
  } else if (mode == "mean_ratio") {
    t.scale_mode = cadfit::ScaleErrorMode::mean_ratio;
  } else {
    throw Error(ErrorCode::invalid_argument, "unknown scale_mode", mode);
  }
  t.validate();
  return t;
}

cadfit::ReviewConfig review_config(const char* text) {
  cadfit::ReviewConfig cfg;
  Options o(text);
  o.read("refine_steps", cfg.refine.steps);
  long long timeout_ms = cfg.refine_timeout.count();
  o.read("refine_timeout_ms", timeout_ms);
  cfg.refine_timeout = std::chrono::milliseconds(timeout_ms);
  o.read("max_points", cfg.max_points);
  std::string journal;
  o.read("journal_file", journal);
  if (!journal.empty()) cfg.journal_file = journal;
  read_weights(o, cfg.weights);
  o.finish();
  cfg.validate();
  return cfg;
}

}  // namespace

extern "C" {

const char* cadfit_version(void) { return "1.0.0"; }

const char* cadfit_status_name(cadfit_status status) {
  switch (status) {
    case CADFIT_OK: return "ok";
    case CADFIT_E_INVALID_ARGUMENT: return "invalid_argument";
    case CADFIT_E_DEGENERATE: return "degenerate";
    case CADFIT_E_PARSE: return "parse_error";
    case CADFIT_E_IO: return "io_error";
    case CADFIT_E_NOT_FOUND: return "not_found";
    case CADFIT_E_SIZE_LIMIT: return "size_limit";
    case CADFIT_E_UNOBSERVABLE: return "unobservable";
    case CADFIT_E_NUMERIC: return "numeric";
    case CADFIT_E_INVALID_STATE: return "invalid_state";
    case CADFIT_E_CONFLICT: return "conflict";
    case CADFIT_E_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* cadfit_last_error(void) { return g_error.c_str(); }
const char* cadfit_last_error_detail(void) { return g_detail.c_str(); }
void cadfit_string_free(char* text) { std::free(text); }

cadfit_status cadfit_database_load(const char* manifest_path, cadfit_database** out) {
  return guarded([&] {
    require(manifest_path, "manifest_path");
    require(out, "out");
    *out = nullptr;
    auto db = std::make_shared<cadfit::CadDatabase>(cadfit::CadDatabase::load_manifest(manifest_path));
    *out = new cadfit_database{std::move(db)};
  });
}

cadfit_status cadfit_database_synth(const char* options_json, cadfit_database** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    auto db = std::make_shared<cadfit::CadDatabase>(cadfit::make_synth_database(synth_db_options(options_json)));
    *out = new cadfit_database{std::move(db)};
  });
}

cadfit_status cadfit_database_save(const cadfit_database* db, const char* directory) {
  return guarded([&] {
    require(db, "db");
    require(directory, "directory");
    db->db->save(directory);
  });
}

size_t cadfit_database_size(const cadfit_database* db) { return db ? db->db->size() : 0; }
void cadfit_database_free(cadfit_database* db) { delete db; }

cadfit_status cadfit_trees_build(const cadfit_database* db, const char* class_label, const char* options_json,
                                 cadfit_trees** out) {
  return guarded([&] {
    require(db, "db");
    require(out, "out");
    *out = nullptr;
    const cadfit::TreeConfig cfg = tree_config(options_json);
    auto result = std::make_unique<cadfit_trees>();
    if (class_label && *class_label) {
      result->trees.emplace(class_label, cadfit::build_tree(db->db->models(), class_label, cfg));
    } else {
      for (const auto& c : db->db->classes()) result->trees.emplace(c, cadfit::build_tree(db->db->models(), c, cfg));
    }
    *out = result.release();
  });
}

cadfit_status cadfit_trees_load_dir(const char* directory, cadfit_trees** out) {
  return guarded([&] {
    require(directory, "directory");
    require(out, "out");
    *out = nullptr;
    *out = new cadfit_trees{cadfit::load_trees(directory)};
  });
}

cadfit_status cadfit_trees_save_dir(const cadfit_trees* trees, const char* directory) {
  return guarded([&] {
    require(trees, "trees");
    require(directory, "directory");
    std::error_code ec;
    std::filesystem::create_directories(directory, ec);
    if (ec) throw Error(ErrorCode::io_error, "cannot create directory", directory);
    for (const auto& [label, tree] : trees->trees) {
      cadfit::save_tree(tree, std::filesystem::path(directory) / (label + ".json"));
    }
  });
}

cadfit_status cadfit_trees_save_file(const cadfit_trees* trees, const char* class_label, const char* path) {
  return guarded([&] {
    require(trees, "trees");
    require(class_label, "class_label");
    require(path, "path");
    const auto it = trees->trees.find(class_label);
    if (it == trees->trees.end()) throw Error(ErrorCode::not_found, "no tree for class", class_label);
    cadfit::save_tree(it->second, path);
  });
}

size_t cadfit_trees_count(const cadfit_trees* trees) { return trees ? trees->trees.size() : 0; }
void cadfit_trees_free(cadfit_trees* trees) { delete trees; }

cadfit_status cadfit_scene_load(const char* manifest_path, cadfit_scene** out) {
  return guarded([&] {
    require(manifest_path, "manifest_path");
    require(out, "out");
    *out = nullptr;
    *out = new cadfit_scene{cadfit::load_scene(manifest_path)};
  });
}

cadfit_status cadfit_scene_synth(const cadfit_database* db, const char* options_json, cadfit_scene** out,
                                 char** gt_json_out) {
  return guarded([&] {
    require(db, "db");
    require(out, "out");
    *out = nullptr;
    if (gt_json_out) *gt_json_out = nullptr;
    cadfit::SynthScene s = cadfit::make_synth_scene(*db->db, synth_scene_options(options_json));
    std::string gt = cadfit::to_json(s.ground_truth);
    auto scene = std::make_unique<cadfit_scene>(cadfit_scene{std::move(s.scene)});
    if (gt_json_out) *gt_json_out = dup_string(gt);
    *out = scene.release();
  });
}

cadfit_status cadfit_scene_save(const cadfit_scene* scene, const char* directory) {
  return guarded([&] {
    require(scene, "scene");
    require(directory, "directory");
    cadfit::save_scene(scene->scene, directory);
  });
}

void cadfit_scene_free(cadfit_scene* scene) { delete scene; }

cadfit_status cadfit_annotate(const cadfit_scene* scene, const cadfit_database* db, const cadfit_trees* trees,
                              const char* options_json, char** annotations_json_out) {
  return cadfit_annotate_traced(scene, db, trees, options_json, nullptr, annotations_json_out, nullptr);
}

cadfit_status cadfit_annotate_traced(const cadfit_scene* scene, const cadfit_database* db, const cadfit_trees* trees,
                                     const char* options_json, const char* trace_level, char** annotations_json_out,
                                     char** trace_jsonl_out) {
  return guarded([&] {
    require(scene, "scene");
    require(db, "db");
    require(trees, "trees");
    require(annotations_json_out, "annotations_json_out");
    *annotations_json_out = nullptr;
    if (trace_jsonl_out) *trace_jsonl_out = nullptr;
    cadfit::TraceLevel level = cadfit::TraceLevel::all;
    const std::string level_name = trace_level ? trace_level : "all";
    if (level_name == "changes") {
      level = cadfit::TraceLevel::changes;
    } else if (level_name != "all") {
      throw cadfit::Error(cadfit::ErrorCode::invalid_argument, "unknown trace level", level_name);
    }
    const cadfit::PipelineConfig cfg = pipeline_config(options_json);
    std::map<std::string, cadfit::SearchResult> searches;
    const cadfit::AnnotationSet set =
        cadfit::annotate_scene(scene->scene, *db->db, trees->trees, cfg, trace_jsonl_out ? &searches : nullptr);
    std::unique_ptr<char, decltype(&std::free)> json_text(dup_string(cadfit::to_json(set)), &std::free);
    if (trace_jsonl_out) {
      std::string trace;
      for (const auto& [id, result] : searches) trace += cadfit::trace_jsonl(result, level, id);
      *trace_jsonl_out = dup_string(trace);
    }
    *annotations_json_out = json_text.release();
  });
}

cadfit_status cadfit_evaluate(const char* predicted_json, const char* ground_truth_json, const char* thresholds_json,
                              const cadfit_database* db, char** report_json_out, char** table_out) {
  return guarded([&] {
    require(predicted_json, "predicted_json");
    require(ground_truth_json, "ground_truth_json");
    require(report_json_out, "report_json_out");
    *report_json_out = nullptr;
    if (table_out) *table_out = nullptr;
    const auto report = cadfit::evaluate(cadfit::annotations_from_json(predicted_json),
                                         cadfit::annotations_from_json(ground_truth_json), thresholds(thresholds_json),
                                         db ? db->db.get() : nullptr);
    std::unique_ptr<char, decltype(&std::free)> json_text(dup_string(report.to_json()), &std::free);
    if (table_out) *table_out = dup_string(report.to_table());
    *report_json_out = json_text.release();
  });
}

cadfit_status cadfit_service_create(const cadfit_database* db, cadfit_service** out) {
  return guarded([&] {
    require(db, "db");
    require(out, "out");
    *out = new cadfit_service;
    (*out)->service = std::make_unique<cadfit::ReviewService>(db->db);
  });
}

cadfit_status cadfit_service_add_scene(cadfit_service* service, const cadfit_scene* scene,
                                       const char* annotations_json, const char* options_json) {
  return guarded([&] {
    require(service, "service");
    require(scene, "scene");
    require(annotations_json, "annotations_json");
    service->service->add_scene(scene->scene, cadfit::annotations_from_json(annotations_json),
                                review_config(options_json));
  });
}

cadfit_status cadfit_service_serve(cadfit_service* service, const char* host, int port, const char* token,
                                   cadfit_ready_fn on_ready, void* user) {
  return guarded([&] {
    require(service, "service");
    cadfit::ServerOptions opt;
    if (host && *host) opt.host = host;
    if (port < 0 || port > 65535) throw Error(ErrorCode::invalid_argument, "port out of range", std::to_string(port));
    opt.port = port;
    if (token && *token) opt.token = token;
    cadfit::ReviewServer server(*service->service, opt);
    const int bound = server.bind();
    if (bound < 0) throw Error(ErrorCode::io_error, "cannot bind", opt.host + ":" + std::to_string(port));
    {
      std::lock_guard lock(service->mutex);
      if (service->running) throw Error(ErrorCode::invalid_state, "service already serving");
      service->running = &server;
    }
    if (on_ready) on_ready(bound, user);
    server.listen_after_bind();
    std::lock_guard lock(service->mutex);
    service->running = nullptr;
  });
}

cadfit_status cadfit_service_stop(cadfit_service* service) {
  return guarded([&] {
    require(service, "service");
    std::lock_guard lock(service->mutex);
    if (!service->running) throw Error(ErrorCode::invalid_state, "service not serving");
    service->running->wait_until_ready();
    service->running->stop();
  });
}

void cadfit_service_free(cadfit_service* service) { delete service; }

}  // extern "C"
