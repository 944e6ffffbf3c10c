#include "cadfit/cad_model.hpp"

#include <set>

#include <nlohmann/json.hpp>

#include "cadfit/error.hpp"
#include "cadfit/io.hpp"

namespace cadfit {

std::uint64_t stable_hash(std::string_view text) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::uint64_t mesh_hash(const TriMesh& mesh) {
  const auto bytes = [](const auto& v) {
    return std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(v[0]));
  };
  return stable_hash(bytes(mesh.vertices)) ^ (stable_hash(bytes(mesh.triangles)) * 31ULL);
}

}  // namespace

CadModelPtr make_cad_model(std::string id, std::string class_label, const TriMesh& raw_mesh, std::size_t samples) {
  raw_mesh.validate();
  if (raw_mesh.empty()) throw Error(ErrorCode::degenerate, "CAD mesh has no triangles", id);
  auto model = std::make_shared<CadModel>();
  model->mesh = normalize_to_unit_cube(raw_mesh);
  // Seeded by geometry so that duplicate meshes under different ids sample alike.
  model->samples = sample_surface(model->mesh, samples, mesh_hash(model->mesh));
  model->index = KdTree(model->samples.points);
  model->id = std::move(id);
  model->class_label = std::move(class_label);
  return model;
}

void CadDatabase::add(CadModelPtr model) {
  if (!model) throw Error(ErrorCode::invalid_argument, "null CAD model");
  if (by_id_.count(model->id)) throw Error(ErrorCode::invalid_argument, "duplicate CAD model id", model->id);
  by_id_[model->id] = model;
  models_.push_back(std::move(model));
}

CadModelPtr CadDatabase::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : it->second;
}

const CadModel& CadDatabase::at(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw Error(ErrorCode::not_found, "unknown CAD model id", id);
  return *it->second;
}

std::vector<CadModelPtr> CadDatabase::models_of_class(const std::string& class_label) const {
  std::vector<CadModelPtr> out;
  for (const auto& m : models_) {
    if (m->class_label == class_label) out.push_back(m);
  }
  return out;
}

std::vector<std::string> CadDatabase::classes() const {
  std::set<std::string> labels;
  for (const auto& m : models_) labels.insert(m->class_label);
  return {labels.begin(), labels.end()};
}

CadDatabase CadDatabase::load_manifest(const std::filesystem::path& manifest, std::size_t samples) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(manifest));
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::parse_error, e.what(), manifest.string() + " offset " + std::to_string(e.byte));
  }
  if (!doc.is_array()) throw Error(ErrorCode::parse_error, "database manifest must be a JSON list", manifest.string());
  CadDatabase db;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& entry = doc[i];
    const std::string where = "[" + std::to_string(i) + "]";
    if (!entry.contains("id") || !entry.contains("class") || !entry.contains("mesh_path")) {
      throw Error(ErrorCode::parse_error, "manifest entry needs id, class and mesh_path", where);
    }
    const auto mesh = load_obj(manifest.parent_path() / entry.at("mesh_path").get<std::string>());
    db.add(make_cad_model(entry.at("id").get<std::string>(), entry.at("class").get<std::string>(), mesh, samples));
  }
  return db;
}

void CadDatabase::save(const std::filesystem::path& directory, const std::string& manifest_name) const {
  std::filesystem::create_directories(directory);
  nlohmann::json doc = nlohmann::json::array();
  for (const auto& m : models_) {
    save_obj(directory / (m->id + ".obj"), m->mesh);
    doc.push_back({{"id", m->id}, {"class", m->class_label}, {"mesh_path", m->id + ".obj"}});
  }
  write_text_file(directory / manifest_name, doc.dump(2) + "\n");
}

}  // namespace cadfit
