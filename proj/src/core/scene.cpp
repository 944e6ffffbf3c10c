#include "cadfit/scene.hpp"

#include <nlohmann/json.hpp>

#include "cadfit/error.hpp"
#include "cadfit/io.hpp"

namespace cadfit {

using nlohmann::json;

void SceneObject::validate() const {
  if (points.empty()) throw Error(ErrorCode::invalid_argument, "scene object has no points", instance_id);
  for (const auto& v : views) v.validate();
  if (partial_mesh) partial_mesh->validate();
}

void Scene::validate() const {
  int width = -1, height = -1;
  for (const auto& obj : objects) {
    for (const auto& v : obj.views) {
      if (width < 0) {
        width = v.intrinsics.width;
        height = v.intrinsics.height;
      } else if (v.intrinsics.width != width || v.intrinsics.height != height) {
        throw Error(ErrorCode::invalid_argument, "view resolutions differ within the scene", obj.instance_id);
      }
    }
  }
}

std::vector<RenderOutput> render_target_views(const SceneObject& object) {
  std::vector<RenderOutput> out;
  out.reserve(object.views.size());
  bool any = false;
  for (const auto& view : object.views) {
    if (view.depth) {
      out.push_back(RenderOutput::from_depth(*view.depth));
    } else if (object.partial_mesh) {
      out.push_back(rasterize(*object.partial_mesh, view));
    } else {
      out.push_back(RenderOutput::from_depth(DepthImage(view.intrinsics.width, view.intrinsics.height)));
    }
    any = any || out.back().coverage() > 0;
  }
  if (!any) throw Error(ErrorCode::unobservable, "no observations", object.instance_id);
  return out;
}

namespace {

json intrinsics_to_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx}, {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

json isometry_to_json(const Eigen::Isometry3d& t) {
  json rows = json::array();
  const Eigen::Matrix4d m = t.matrix();
  for (int r = 0; r < 4; ++r) {
    for (int c = 0; c < 4; ++c) rows.push_back(m(r, c));
  }
  return rows;
}

template <class F>
auto field(const json& j, const char* key, const std::string& where, F&& get) {
  if (!j.contains(key)) throw Error(ErrorCode::parse_error, std::string("missing field '") + key + "'", where);
  try {
    return get(j.at(key));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("bad field '") + key + "': " + e.what(), where);
  }
}

}  // namespace

Scene load_scene(const std::filesystem::path& manifest) {
  const auto dir = manifest.parent_path();
  json doc;
  try {
    doc = json::parse(read_text_file(manifest));
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, e.what(), manifest.string() + " offset " + std::to_string(e.byte));
  }
  Scene scene;
  scene.scene_id = field(doc, "scene_id", "scene", [](const json& v) { return v.get<std::string>(); });
  const json& objects = field(doc, "objects", "scene", [](const json& v) -> const json& { return v; });
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const json& o = objects[i];
    const std::string where = "objects[" + std::to_string(i) + "]";
    SceneObject obj;
    obj.instance_id = field(o, "instance_id", where, [](const json& v) { return v.get<std::string>(); });
    obj.class_label = field(o, "class", where, [](const json& v) { return v.get<std::string>(); });
    obj.points = load_xyz(dir / field(o, "points_path", where, [](const json& v) { return v.get<std::string>(); }));
    if (o.contains("partial_mesh_path")) obj.partial_mesh = load_obj(dir / o.at("partial_mesh_path").get<std::string>());
    const json& views = o.contains("views") ? o.at("views") : json::array();
    for (std::size_t k = 0; k < views.size(); ++k) {
      const json& v = views[k];
      const std::string vwhere = where + ".views[" + std::to_string(k) + "]";
      CameraView view;
      const json& in = field(v, "intrinsics", vwhere, [](const json& x) -> const json& { return x; });
      view.intrinsics = {field(in, "fx", vwhere, [](const json& x) { return x.get<double>(); }),
                         field(in, "fy", vwhere, [](const json& x) { return x.get<double>(); }),
                         field(in, "cx", vwhere, [](const json& x) { return x.get<double>(); }),
                         field(in, "cy", vwhere, [](const json& x) { return x.get<double>(); }),
                         field(in, "width", vwhere, [](const json& x) { return x.get<int>(); }),
                         field(in, "height", vwhere, [](const json& x) { return x.get<int>(); })};
      const auto ext = field(v, "extrinsics", vwhere, [](const json& x) { return x.get<std::vector<double>>(); });
      if (ext.size() != 16) throw Error(ErrorCode::parse_error, "extrinsics must hold 16 values", vwhere);
      Eigen::Matrix4d m;
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) m(r, c) = ext[static_cast<std::size_t>(r * 4 + c)];
      }
      view.world_to_camera.matrix() = m;
      if (v.contains("depth_path") && !v.at("depth_path").is_null()) {
        view.depth = read_depth_pgm(dir / v.at("depth_path").get<std::string>());
      }
      view.validate();
      obj.views.push_back(std::move(view));
    }
    obj.validate();
    scene.objects.push_back(std::move(obj));
  }
  scene.validate();
  return scene;
}

void save_scene(const Scene& scene, const std::filesystem::path& directory, const std::string& manifest_name) {
  std::filesystem::create_directories(directory);
  json objects = json::array();
  for (std::size_t i = 0; i < scene.objects.size(); ++i) {
    const auto& obj = scene.objects[i];
    const std::string stem = "obj" + std::to_string(i);
    save_xyz(directory / (stem + ".xyz"), obj.points);
    json o{{"instance_id", obj.instance_id}, {"class", obj.class_label}, {"points_path", stem + ".xyz"}};
    if (obj.partial_mesh) {
      save_obj(directory / (stem + "_partial.obj"), *obj.partial_mesh);
      o["partial_mesh_path"] = stem + "_partial.obj";
    }
    json views = json::array();
    for (std::size_t k = 0; k < obj.views.size(); ++k) {
      const auto& view = obj.views[k];
      json v{{"intrinsics", intrinsics_to_json(view.intrinsics)}, {"extrinsics", isometry_to_json(view.world_to_camera)}};
      if (view.depth) {
        const std::string name = stem + "_view" + std::to_string(k) + ".pgm";
        write_depth_pgm(directory / name, *view.depth);
        v["depth_path"] = name;
      }
      views.push_back(std::move(v));
    }
    o["views"] = std::move(views);
    objects.push_back(std::move(o));
  }
  const json doc{{"schema_version", 1}, {"scene_id", scene.scene_id}, {"objects", std::move(objects)}};
  write_text_file(directory / manifest_name, doc.dump(2) + "\n");
}

}  // namespace cadfit
