#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cadfit/geometry.hpp"
#include "cadfit/render.hpp"

namespace cadfit {

// One instance-segmented object of a scan with its posed, instance-masked
// depth observations.
struct SceneObject {
  std::string instance_id;
  std::string class_label;
  PointCloud points;
  std::optional<TriMesh> partial_mesh;
  std::vector<CameraView> views;

  void validate() const;
};

struct Scene {
  std::string scene_id;
  std::vector<SceneObject> objects;

  void validate() const;
};

// One RenderOutput per view: the masked sensor depth when the view carries
// one, otherwise a rasterization of the object's partial mesh. Throws
// Error(unobservable, "no observations") if every view is empty.
std::vector<RenderOutput> render_target_views(const SceneObject& object);

// Scene manifest JSON; all referenced paths are relative to the manifest's
// directory.
Scene load_scene(const std::filesystem::path& manifest);
// Writes the manifest plus per-object .xyz point files and .pgm depth maps
// into `directory`.
void save_scene(const Scene& scene, const std::filesystem::path& directory,
                const std::string& manifest_name = "scene.json");

}  // namespace cadfit
