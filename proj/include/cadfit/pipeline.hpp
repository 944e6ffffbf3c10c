#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "cadfit/annotation.hpp"
#include "cadfit/cad_model.hpp"
#include "cadfit/hoc_tree.hpp"
#include "cadfit/mcts.hpp"
#include "cadfit/scene.hpp"

namespace cadfit {

// Gravity-aligned box fit: the horizontal principal axis gives the azimuth,
// the pose scale holds the full box sizes (canonical models span a unit cube).
// Throws Error(degenerate) for empty or flat point sets.
Pose9D init_pose(const PointCloud& points);
Pose9D init_pose(const SceneObject& object);

struct SymmetryOptions {
  std::size_t samples = 5000;
  double threshold = 0.05;  // mean unsquared symmetric chamfer, unit-diagonal shapes
  std::uint64_t seed = 0x5eed;
};

// Chamfer between the shape and its copies rotated about the up-axis in 45
// degree increments; one value per multiple k = 1..7.
std::vector<double> symmetry_chamfers(const TriMesh& mesh, const SymmetryOptions& options = {});
Symmetry classify_symmetry(const TriMesh& mesh, const SymmetryOptions& options = {});

using TreeSet = std::map<std::string, HocTree>;  // class label -> tree

// Every *.json file of the directory, keyed by the tree's class label.
TreeSet load_trees(const std::filesystem::path& directory);

struct CloneConfig {
  bool enabled = true;
  double tau = 0.02;  // complete-linkage threshold on clone_distance
  std::set<std::string> classes{"chair", "cabinet", "sofa", "bookshelf", "display", "table"};
};

struct PipelineConfig {
  SearchConfig search;
  RcWeights weights;
  int final_refine_steps = 300;
  CloneConfig clone;
  SymmetryOptions symmetry;
  std::size_t max_points = 2000;
  std::uint64_t seed = 0;
  int threads = 1;  // per-object workers

  void validate() const;
};

// Per-object search seed derived from the run seed and the instance id.
std::uint64_t object_seed(std::uint64_t seed, const std::string& instance_id);

// init_pose -> search -> final refinement per object, then cloning and
// symmetry classification. Failures are recorded per object and never abort
// the scene; objects whose class has no tree are skipped with a warning.
// When `searches` is given it receives each object's search result by instance id.
AnnotationSet annotate_scene(const Scene& scene, const CadDatabase& database, const TreeSet& trees,
                             const PipelineConfig& config = {},
                             std::map<std::string, SearchResult>* searches = nullptr);

// Unsquared symmetric chamfer between canonical samples, unit-diagonal scale.
double clone_distance(const CadModel& a, const CadModel& b);

// Groups same-class annotations whose models lie within tau of each other and
// assigns each group the member model minimizing the summed objective at the
// current poses; changed objects are re-refined.
void cluster_and_clone(AnnotationSet& annotations, const Scene& scene, const CadDatabase& database,
                       const PipelineConfig& config = {});

// Symmetry of the annotation's model at its annotated scale.
Symmetry classify_annotation(const Annotation& annotation, const CadDatabase& database,
                             const SymmetryOptions& options = {});

}  // namespace cadfit
