#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cadfit/cad_model.hpp"

namespace cadfit {

enum class NodeKind { root, pose_bin, cluster, leaf };

std::string_view to_string(NodeKind kind);

struct HocNode {
  NodeKind kind = NodeKind::leaf;
  int parent = -1;
  int depth = 0;
  int pose_bin = -1;  // index of the enclosing pose-bin subtree, -1 at the root
  std::vector<int> children;
  double rotation_offset = 0.0;   // pose_bin: rotation about the up-axis, radians
  std::string representative_id;  // cluster: medoid model
  std::string model_id;           // leaf
};

struct TreeConfig {
  int pose_bins = 4;
  int branching = 4;
  int max_depth = 6;  // cluster nodes at this depth list their members as leaves
  // Prefix of each model's canonical samples used for pairwise distances.
  std::size_t cluster_samples = 1024;

  void validate() const;
};

// Root -> pose bins (evenly spaced rotations about the up-axis) -> a shape
// cluster hierarchy whose leaves are individual CAD models. Every pose bin
// holds the same cluster hierarchy. Nodes are stored in depth-first preorder;
// node 0 is the root.
class HocTree {
 public:
  const std::string& class_label() const { return class_label_; }
  int pose_bins() const { return pose_bins_; }
  int branching() const { return branching_; }

  const std::vector<HocNode>& nodes() const { return nodes_; }
  const HocNode& node(int id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  std::size_t size() const { return nodes_.size(); }
  std::vector<int> leaves() const;
  std::size_t leaf_count() const;
  // Model ids of all leaves below `id`, in preorder.
  std::vector<std::string> members(int id) const;
  // Node ids from the root down to `id`.
  std::vector<int> path_from_root(int id) const;

  // Checks every structural invariant; throws Error(invalid_state) with the
  // offending node path.
  void validate() const;

  std::string to_json() const;
  static HocTree from_json(const std::string& text);

 private:
  friend HocTree build_tree(std::span<const CadModelPtr>, const std::string&, const TreeConfig&);

  void finalize();  // recompute parent / depth / pose_bin fields

  std::string class_label_;
  int pose_bins_ = 0;
  int branching_ = 0;
  std::vector<HocNode> nodes_;
};

// Symmetric squared chamfer between canonical sample prefixes.
double shape_distance(const CadModel& a, const CadModel& b, std::size_t samples = 1024);

// Pairwise shape_distance matrix, row-major.
std::vector<double> shape_distance_matrix(std::span<const CadModelPtr> models, std::size_t samples = 1024);

// Models whose class differs from `class_label` are ignored. Throws
// Error(invalid_argument) when no model of the class remains.
HocTree build_tree(std::span<const CadModelPtr> models, const std::string& class_label, const TreeConfig& config = {});

struct TreeCandidate {
  std::string cad_id;
  double rotation_offset = 0.0;
  int pose_bin = 0;
  int leaf = -1;
};

// `path` must start at the root, follow parent-child links and end at a leaf.
TreeCandidate tree_path_to_candidate(const HocTree& tree, std::span<const int> path);

void save_tree(const HocTree& tree, const std::filesystem::path& file);
HocTree load_tree(const std::filesystem::path& file);

inline constexpr int kTreeSchemaVersion = 1;

}  // namespace cadfit
