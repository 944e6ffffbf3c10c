#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cadfit/geometry.hpp"
#include "cadfit/kdtree.hpp"

namespace cadfit {

inline constexpr std::size_t kCanonicalSamples = 5000;

// A database shape in its canonical frame: the mesh is normalized per axis
// to [-0.5, 0.5]^3, so a pose's scale equals the object's metric box size.
struct CadModel {
  std::string id;
  std::string class_label;
  TriMesh mesh;
  PointCloud samples;  // seed-stable surface samples of `mesh`
  KdTree index;        // over `samples`
};

using CadModelPtr = std::shared_ptr<const CadModel>;

CadModelPtr make_cad_model(std::string id, std::string class_label, const TriMesh& raw_mesh,
                           std::size_t samples = kCanonicalSamples);

// Stable 64-bit FNV-1a, used to derive per-model sampling seeds.
std::uint64_t stable_hash(std::string_view text);

class CadDatabase {
 public:
  void add(CadModelPtr model);

  CadModelPtr find(const std::string& id) const;
  // Throws Error(not_found).
  const CadModel& at(const std::string& id) const;
  bool contains(const std::string& id) const { return by_id_.count(id) != 0; }

  const std::vector<CadModelPtr>& models() const { return models_; }
  std::vector<CadModelPtr> models_of_class(const std::string& class_label) const;
  std::vector<std::string> classes() const;
  std::size_t size() const { return models_.size(); }

  // Manifest: JSON list of {"id", "class", "mesh_path"}; mesh paths are
  // relative to the manifest directory.
  static CadDatabase load_manifest(const std::filesystem::path& manifest, std::size_t samples = kCanonicalSamples);
  // Writes <directory>/<id>.obj for every model and the manifest.
  void save(const std::filesystem::path& directory, const std::string& manifest_name = "database.json") const;

 private:
  std::vector<CadModelPtr> models_;
  std::map<std::string, CadModelPtr> by_id_;
};

}  // namespace cadfit
