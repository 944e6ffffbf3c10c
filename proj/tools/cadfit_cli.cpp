#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cadfit/cadfit.h"

namespace {

struct Failure {
  cadfit_status status;
};

void check(cadfit_status s) {
  if (s == CADFIT_OK) return;
  std::cerr << "error (" << cadfit_status_name(s) << "): " << cadfit_last_error();
  const std::string detail = cadfit_last_error_detail();
  if (!detail.empty()) std::cerr << " [" << detail << "]";
  std::cerr << "\n";
  throw Failure{s};
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    std::cerr << "error: cannot read " << path << "\n";
    throw Failure{CADFIT_E_IO};
  }
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f || !(f << text)) {
    std::cerr << "error: cannot write " << path << "\n";
    throw Failure{CADFIT_E_IO};
  }
}

// Config arguments accept inline JSON or @file.
std::string json_arg(const std::string& value) {
  if (!value.empty() && value[0] == '@') return read_file(value.substr(1));
  return value;
}

nlohmann::json config_object(const std::string& text) {
  if (text.empty()) return nlohmann::json::object();
  try {
    auto j = nlohmann::json::parse(text);
    if (j.is_object()) return j;
  } catch (const nlohmann::json::exception&) {
  }
  std::cerr << "error: --config must be a JSON object\n";
  throw Failure{CADFIT_E_PARSE};
}

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { cadfit_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

using DbPtr = std::unique_ptr<cadfit_database, decltype(&cadfit_database_free)>;
using ScenePtr = std::unique_ptr<cadfit_scene, decltype(&cadfit_scene_free)>;
using TreesPtr = std::unique_ptr<cadfit_trees, decltype(&cadfit_trees_free)>;

DbPtr load_db(const std::string& manifest) {
  cadfit_database* db = nullptr;
  check(cadfit_database_load(manifest.c_str(), &db));
  return DbPtr(db, &cadfit_database_free);
}

ScenePtr load_scene(const std::string& manifest) {
  cadfit_scene* s = nullptr;
  check(cadfit_scene_load(manifest.c_str(), &s));
  return ScenePtr(s, &cadfit_scene_free);
}

void on_ready(int port, void* host) {
  std::cout << "review service listening on http://" << static_cast<const char*>(host) << ":" << port << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"CAD retrieval and 9-DoF alignment"};
  app.require_subcommand(1);
  app.set_version_flag("--version", cadfit_version());

  std::string out, db_path, scene_path, trees_dir, config, pred_path, gt_path, class_label, trace_path,
      trace_level = "all", host = "127.0.0.1", token;
  int port = 8080;
  long long seed = -1;
  int iterations = -1;
  std::vector<double> weights;
  bool json_only = false, table_only = false;
  std::vector<std::string> serve_scenes, serve_annotations;

  auto* annotate = app.add_subcommand("annotate", "Retrieve and align a CAD model for every object of a scene");
  annotate->add_option("scene", scene_path, "Scene manifest")->required();
  annotate->add_option("--db", db_path, "Database manifest")->required();
  annotate->add_option("--trees", trees_dir, "Directory of shape trees")->required();
  annotate->add_option("--out", out, "Annotation file")->required();
  annotate->add_option("--seed", seed, "Search seed");
  annotate->add_option("--iterations", iterations, "MCTS iterations per object");
  annotate->add_option("--weights", weights, "Objective weights depth,silhouette,chamfer")
      ->delimiter(',')
      ->expected(3);
  annotate->add_option("--config", config, "Further pipeline options (JSON or @file)");
  annotate->add_option("--trace", trace_path, "Write search traces as JSON lines");
  annotate->add_option("--trace-level", trace_level, "all | changes")->check(CLI::IsMember({"all", "changes"}));

  auto* build = app.add_subcommand("build-tree", "Build the shape tree of one class");
  build->add_option("manifest", db_path, "Database manifest")->required();
  build->add_option("--class", class_label, "Class label")->required();
  build->add_option("--out", out, "Tree file")->required();
  build->add_option("--config", config, "Tree options (JSON or @file)");

  auto* synth_db = app.add_subcommand("synth-db", "Write a procedural furniture database");
  synth_db->add_option("--out", out, "Output directory")->required();
  synth_db->add_option("--config", config, "Database options (JSON or @file)");

  auto* synth_scene = app.add_subcommand("synth-scene", "Render a synthetic scene with ground truth");
  synth_scene->add_option("--db", db_path, "Database manifest")->required();
  synth_scene->add_option("--out", out, "Output directory (scene.json, gt.json)")->required();
  synth_scene->add_option("--config", config, "Scene options (JSON or @file)");

  auto* eval = app.add_subcommand("eval", "Score annotations against ground truth");
  eval->add_option("pred", pred_path, "Predicted annotation file")->required();
  eval->add_option("gt", gt_path, "Ground-truth annotation file")->required();
  eval->add_option("--db", db_path, "Database manifest (enables shape metrics)");
  eval->add_option("--config", config, "Thresholds (JSON or @file)");
  auto* json_flag = eval->add_flag("--json", json_only, "Print only the JSON report");
  eval->add_flag("--table", table_only, "Print only the table")->excludes(json_flag);

  auto* serve = app.add_subcommand("serve", "Run the review service");
  serve->add_option("--db", db_path, "Database manifest")->required();
  serve->add_option("--scene", serve_scenes, "Scene manifest (repeatable)")->required();
  serve->add_option("--annotations", serve_annotations, "Annotation file per scene, same order")->required();
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port (0: ephemeral)");
  serve->add_option("--token", token, "Require this bearer token");
  serve->add_option("--config", config, "Review options (JSON or @file)");

  CLI11_PARSE(app, argc, argv);

  try {
    std::string cfg = json_arg(config);
    if (*annotate) {
      nlohmann::json options = config_object(cfg);
      if (seed >= 0) options["seed"] = seed;
      if (iterations >= 0) options["search"]["max_iterations"] = iterations;
      if (!weights.empty()) {
        options["weights"] = {{"depth", weights[0]}, {"silhouette", weights[1]}, {"chamfer", weights[2]}};
      }
      cfg = options.dump();
      DbPtr db = load_db(db_path);
      ScenePtr scene = load_scene(scene_path);
      cadfit_trees* trees = nullptr;
      check(cadfit_trees_load_dir(trees_dir.c_str(), &trees));
      TreesPtr owned(trees, &cadfit_trees_free);
      OwnedString result, trace;
      check(cadfit_annotate_traced(scene.get(), db.get(), trees, cfg.c_str(), trace_level.c_str(), &result.p,
                                   trace_path.empty() ? nullptr : &trace.p));
      write_file(out, result.str());
      if (!trace_path.empty()) write_file(trace_path, trace.str());
      std::cout << "wrote " << out << "\n";
    } else if (*build) {
      DbPtr db = load_db(db_path);
      cadfit_trees* trees = nullptr;
      check(cadfit_trees_build(db.get(), class_label.c_str(), cfg.c_str(), &trees));
      TreesPtr owned(trees, &cadfit_trees_free);
      check(cadfit_trees_save_file(trees, class_label.c_str(), out.c_str()));
      std::cout << "wrote " << out << "\n";
    } else if (*synth_db) {
      cadfit_database* db = nullptr;
      check(cadfit_database_synth(cfg.c_str(), &db));
      DbPtr owned(db, &cadfit_database_free);
      check(cadfit_database_save(db, out.c_str()));
      std::cout << "wrote " << cadfit_database_size(db) << " models to " << out << "\n";
    } else if (*synth_scene) {
      DbPtr db = load_db(db_path);
      cadfit_scene* scene = nullptr;
      OwnedString gt;
      check(cadfit_scene_synth(db.get(), cfg.c_str(), &scene, &gt.p));
      ScenePtr owned(scene, &cadfit_scene_free);
      check(cadfit_scene_save(scene, out.c_str()));
      write_file(out + "/gt.json", gt.str());
      std::cout << "wrote " << out << "/scene.json and " << out << "/gt.json\n";
    } else if (*eval) {
      DbPtr db(nullptr, &cadfit_database_free);
      if (!db_path.empty()) db = load_db(db_path);
      const std::string pred = read_file(pred_path), gt = read_file(gt_path);
      OwnedString report, table;
      check(cadfit_evaluate(pred.c_str(), gt.c_str(), cfg.c_str(), db.get(), &report.p, &table.p));
      if (!json_only) std::cout << table.str();
      if (!json_only && !table_only) std::cout << "\n";
      if (!table_only) std::cout << report.str() << "\n";
    } else if (*serve) {
      if (serve_scenes.size() != serve_annotations.size()) {
        std::cerr << "error: --scene and --annotations must pair up\n";
        return 2;
      }
      DbPtr db = load_db(db_path);
      cadfit_service* service = nullptr;
      check(cadfit_service_create(db.get(), &service));
      std::unique_ptr<cadfit_service, decltype(&cadfit_service_free)> owned(service, &cadfit_service_free);
      for (std::size_t i = 0; i < serve_scenes.size(); ++i) {
        ScenePtr scene = load_scene(serve_scenes[i]);
        const std::string ann = read_file(serve_annotations[i]);
        check(cadfit_service_add_scene(service, scene.get(), ann.c_str(), cfg.c_str()));
      }
      check(cadfit_service_serve(service, host.c_str(), port, token.empty() ? nullptr : token.c_str(), on_ready,
                                 const_cast<char*>(host.c_str())));
    }
  } catch (const Failure& f) {
    return f.status == CADFIT_E_INTERNAL ? 70 : 1;
  }
  return 0;
}
