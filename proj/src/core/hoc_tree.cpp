#include "cadfit/hoc_tree.hpp"

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <set>

#include <nlohmann/json.hpp>

#include "cadfit/error.hpp"
#include "cadfit/io.hpp"
#include "cadfit/metrics.hpp"

namespace cadfit {

using nlohmann::json;

std::string_view to_string(NodeKind kind) {
  switch (kind) {
    case NodeKind::root: return "root";
    case NodeKind::pose_bin: return "pose_bin";
    case NodeKind::cluster: return "cluster";
    case NodeKind::leaf: return "leaf";
  }
  return "leaf";
}

void TreeConfig::validate() const {
  if (pose_bins < 1) throw Error(ErrorCode::invalid_argument, "pose_bins must be >= 1");
  if (branching < 2) throw Error(ErrorCode::invalid_argument, "branching must be >= 2");
  if (max_depth < 2) throw Error(ErrorCode::invalid_argument, "max_depth must be >= 2");
  if (cluster_samples < 1) throw Error(ErrorCode::invalid_argument, "cluster_samples must be >= 1");
}

std::vector<int> HocTree::leaves() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (nodes_[i].kind == NodeKind::leaf) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::size_t HocTree::leaf_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const HocNode& n) { return n.kind == NodeKind::leaf; }));
}

std::vector<std::string> HocTree::members(int id) const {
  std::vector<std::string> out;
  std::function<void(int)> walk = [&](int n) {
    const auto& node = this->node(n);
    if (node.kind == NodeKind::leaf) out.push_back(node.model_id);
    for (int c : node.children) walk(c);
  };
  walk(id);
  return out;
}

std::vector<int> HocTree::path_from_root(int id) const {
  std::vector<int> path;
  for (int n = id; n >= 0; n = node(n).parent) path.push_back(n);
  std::reverse(path.begin(), path.end());
  return path;
}

void HocTree::finalize() {
  for (auto& n : nodes_) n.parent = -1;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    for (int c : nodes_[i].children) nodes_[static_cast<std::size_t>(c)].parent = static_cast<int>(i);
  }
  // Preorder guarantees parents precede children.
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& n = nodes_[i];
    if (n.parent < 0) {
      n.depth = 0;
      n.pose_bin = -1;
      continue;
    }
    const auto& p = nodes_[static_cast<std::size_t>(n.parent)];
    n.depth = p.depth + 1;
    if (n.kind == NodeKind::pose_bin) {
      const auto pos = std::find(p.children.begin(), p.children.end(), static_cast<int>(i)) - p.children.begin();
      n.pose_bin = static_cast<int>(pos);
    } else {
      n.pose_bin = p.pose_bin;
    }
  }
}

namespace {

std::string node_path(const HocTree& tree, int id) {
  std::string out = "root";
  const auto path = tree.path_from_root(id);
  for (std::size_t k = 1; k < path.size(); ++k) {
    const auto& siblings = tree.node(path[k - 1]).children;
    const auto pos = std::find(siblings.begin(), siblings.end(), path[k]) - siblings.begin();
    out += ".children[" + std::to_string(pos) + "]";
  }
  return out;
}

HocNode make_node(NodeKind kind) {
  HocNode n;
  n.kind = kind;
  return n;
}

[[noreturn]] void invalid(const HocTree& tree, int id, const std::string& what) {
  throw Error(ErrorCode::invalid_state, "tree invariant violated: " + what, node_path(tree, id));
}

}  // namespace

void HocTree::validate() const {
  if (nodes_.empty()) throw Error(ErrorCode::invalid_state, "tree invariant violated: empty tree", "root");
  if (nodes_[0].kind != NodeKind::root) invalid(*this, 0, "node 0 must be the root");
  if (static_cast<int>(nodes_[0].children.size()) != pose_bins_ || pose_bins_ < 1) {
    invalid(*this, 0, "root must have exactly pose_bins children");
  }
  std::set<std::string> reference;
  for (std::size_t b = 0; b < nodes_[0].children.size(); ++b) {
    const int bin = nodes_[0].children[b];
    if (node(bin).kind != NodeKind::pose_bin) invalid(*this, bin, "root children must be pose bins");
    if (!std::isfinite(node(bin).rotation_offset)) invalid(*this, bin, "rotation offset not finite");
    std::set<std::string> seen;
    std::function<void(int)> walk = [&](int id) {
      const auto& n = node(id);
      if (n.kind == NodeKind::root || (n.kind == NodeKind::pose_bin && id != bin)) {
        invalid(*this, id, "unexpected " + std::string(to_string(n.kind)) + " node");
      }
      if (n.kind == NodeKind::leaf) {
        if (!n.children.empty()) invalid(*this, id, "leaf with children");
        if (n.model_id.empty()) invalid(*this, id, "leaf without model id");
        if (!seen.insert(n.model_id).second) invalid(*this, id, "duplicate leaf id '" + n.model_id + "'");
        return;
      }
      if (n.children.empty()) invalid(*this, id, "inner node without children");
      if (n.kind == NodeKind::cluster) {
        const auto m = members(id);
        if (std::find(m.begin(), m.end(), n.representative_id) == m.end()) {
          invalid(*this, id, "cluster representative is not a member");
        }
      }
      for (int c : n.children) walk(c);
    };
    walk(bin);
    if (b == 0) {
      reference = seen;
    } else if (seen != reference) {
      invalid(*this, bin, "pose bins do not share the same leaf set");
    }
  }
}

double shape_distance(const CadModel& a, const CadModel& b, std::size_t samples) {
  const std::size_t na = std::min(samples, a.samples.size());
  const std::size_t nb = std::min(samples, b.samples.size());
  const std::span<const Vec3> pa(a.samples.points.data(), na);
  const std::span<const Vec3> pb(b.samples.points.data(), nb);
  return one_sided_chamfer(pa, KdTree(pb)) + one_sided_chamfer(pb, KdTree(pa));
}

std::vector<double> shape_distance_matrix(std::span<const CadModelPtr> models, std::size_t samples) {
  const std::size_t n = models.size();
  std::vector<KdTree> index;
  std::vector<std::span<const Vec3>> prefix;
  index.reserve(n);
  for (const auto& m : models) {
    prefix.emplace_back(m->samples.points.data(), std::min(samples, m->samples.size()));
    index.emplace_back(prefix.back());
  }
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = one_sided_chamfer(prefix[i], index[j]) + one_sided_chamfer(prefix[j], index[i]);
      d[i * n + j] = d[j * n + i] = v;
    }
  }
  return d;
}

namespace {

struct DendroNode {
  int left = -1;
  int right = -1;
  double height = 0.0;
  std::vector<std::size_t> members;  // sorted model indices
};

// Average-linkage agglomeration with the Lance-Williams update. Ties resolve to
// the lexicographically smallest active pair.
std::vector<DendroNode> agglomerate(const std::vector<double>& dist, std::size_t n) {
  std::vector<DendroNode> dendro(n);
  for (std::size_t i = 0; i < n; ++i) dendro[i].members = {i};
  std::vector<int> active(n);
  for (std::size_t i = 0; i < n; ++i) active[i] = static_cast<int>(i);
  // Linkage between active clusters, keyed by dendrogram id.
  std::map<std::pair<int, int>, double> link;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) link[{static_cast<int>(i), static_cast<int>(j)}] = dist[i * n + j];
  }
  auto get = [&](int a, int b) { return link.at({std::min(a, b), std::max(a, b)}); };
  while (active.size() > 1) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t bi = 0, bj = 1;
    for (std::size_t i = 0; i < active.size(); ++i) {
      for (std::size_t j = i + 1; j < active.size(); ++j) {
        const double v = get(active[i], active[j]);
        if (v < best) {
          best = v;
          bi = i;
          bj = j;
        }
      }
    }
    const int a = active[bi], b = active[bj];
    DendroNode merged;
    merged.left = a;
    merged.right = b;
    merged.height = best;
    merged.members = dendro[static_cast<std::size_t>(a)].members;
    const auto& mb = dendro[static_cast<std::size_t>(b)].members;
    merged.members.insert(merged.members.end(), mb.begin(), mb.end());
    std::sort(merged.members.begin(), merged.members.end());
    const int id = static_cast<int>(dendro.size());
    const double na = static_cast<double>(dendro[static_cast<std::size_t>(a)].members.size());
    const double nb = static_cast<double>(mb.size());
    dendro.push_back(std::move(merged));
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
    active.erase(active.begin() + static_cast<std::ptrdiff_t>(bi));
    for (int k : active) link[{k, id}] = (na * get(k, a) + nb * get(k, b)) / (na + nb);
    active.push_back(id);
  }
  return dendro;
}

// Expands a dendrogram node into at most `branching` groups by repeatedly
// splitting the group with the largest merge height.
std::vector<int> expand(const std::vector<DendroNode>& dendro, int id, int branching) {
  std::vector<int> groups{id};
  while (static_cast<int>(groups.size()) < branching) {
    int pick = -1;
    for (std::size_t g = 0; g < groups.size(); ++g) {
      const auto& d = dendro[static_cast<std::size_t>(groups[g])];
      if (d.left < 0) continue;
      if (pick < 0 || d.height > dendro[static_cast<std::size_t>(groups[static_cast<std::size_t>(pick)])].height) {
        pick = static_cast<int>(g);
      }
    }
    if (pick < 0) break;
    const auto& d = dendro[static_cast<std::size_t>(groups[static_cast<std::size_t>(pick)])];
    int first = d.left, second = d.right;
    if (dendro[static_cast<std::size_t>(second)].members.front() < dendro[static_cast<std::size_t>(first)].members.front()) {
      std::swap(first, second);
    }
    groups[static_cast<std::size_t>(pick)] = first;
    groups.insert(groups.begin() + pick + 1, second);
  }
  return groups;
}

std::size_t medoid(const std::vector<double>& dist, std::size_t n, const std::vector<std::size_t>& members) {
  std::size_t best = members.front();
  double best_sum = std::numeric_limits<double>::infinity();
  for (auto i : members) {
    double sum = 0.0;
    for (auto j : members) sum += dist[i * n + j];
    if (sum < best_sum) {
      best_sum = sum;
      best = i;
    }
  }
  return best;
}

}  // namespace

HocTree build_tree(std::span<const CadModelPtr> models, const std::string& class_label, const TreeConfig& config) {
  config.validate();
  std::vector<CadModelPtr> pool;
  for (const auto& m : models) {
    if (m && m->class_label == class_label) pool.push_back(m);
  }
  if (pool.empty()) throw Error(ErrorCode::invalid_argument, "no CAD models of class '" + class_label + "'");
  {
    std::set<std::string> ids;
    for (const auto& m : pool) {
      if (!ids.insert(m->id).second) throw Error(ErrorCode::invalid_argument, "duplicate CAD model id", m->id);
    }
  }

  const std::size_t n = pool.size();
  const auto dist = shape_distance_matrix(pool, config.cluster_samples);
  const auto dendro = agglomerate(dist, n);
  const int top = static_cast<int>(dendro.size()) - 1;

  HocTree tree;
  tree.class_label_ = class_label;
  tree.pose_bins_ = config.pose_bins;
  tree.branching_ = config.branching;
  tree.nodes_.push_back(make_node(NodeKind::root));

  std::function<int(int, int)> emit = [&](int dendro_id, int depth) -> int {
    const auto& d = dendro[static_cast<std::size_t>(dendro_id)];
    const int id = static_cast<int>(tree.nodes_.size());
    if (d.members.size() == 1) {
      HocNode leaf = make_node(NodeKind::leaf);
      leaf.model_id = pool[d.members.front()]->id;
      tree.nodes_.push_back(std::move(leaf));
      return id;
    }
    HocNode cluster = make_node(NodeKind::cluster);
    cluster.representative_id = pool[medoid(dist, n, d.members)]->id;
    tree.nodes_.push_back(std::move(cluster));
    std::vector<int> children;
    if (depth >= config.max_depth) {
      for (auto m : d.members) children.push_back(emit(static_cast<int>(m), depth + 1));
    } else {
      for (int g : expand(dendro, dendro_id, config.branching)) children.push_back(emit(g, depth + 1));
    }
    tree.nodes_[static_cast<std::size_t>(id)].children = std::move(children);
    return id;
  };

  for (int b = 0; b < config.pose_bins; ++b) {
    const int bin_id = static_cast<int>(tree.nodes_.size());
    HocNode bin = make_node(NodeKind::pose_bin);
    bin.rotation_offset = 2.0 * std::numbers::pi * b / config.pose_bins;
    tree.nodes_.push_back(std::move(bin));
    tree.nodes_[0].children.push_back(bin_id);
    std::vector<int> children;
    for (int g : expand(dendro, top, config.branching)) children.push_back(emit(g, 2));
    tree.nodes_[static_cast<std::size_t>(bin_id)].children = std::move(children);
  }
  tree.finalize();
  tree.validate();
  return tree;
}

TreeCandidate tree_path_to_candidate(const HocTree& tree, std::span<const int> path) {
  if (path.empty() || path.front() != 0) throw Error(ErrorCode::invalid_argument, "path must start at the root");
  for (std::size_t k = 0; k < path.size(); ++k) {
    if (path[k] < 0 || static_cast<std::size_t>(path[k]) >= tree.size()) {
      throw Error(ErrorCode::invalid_argument, "path references an unknown node", std::to_string(path[k]));
    }
    if (k > 0 && tree.node(path[k]).parent != path[k - 1]) {
      throw Error(ErrorCode::invalid_argument, "path is not a parent-child chain", "position " + std::to_string(k));
    }
  }
  const auto& last = tree.node(path.back());
  if (last.kind != NodeKind::leaf) {
    throw Error(ErrorCode::invalid_argument, "path ends at a non-leaf node", std::string(to_string(last.kind)));
  }
  const auto& bin = tree.node(path[1]);
  return {last.model_id, bin.rotation_offset, last.pose_bin, path.back()};
}

std::string HocTree::to_json() const {
  std::function<json(int)> dump = [&](int id) {
    const auto& n = node(id);
    json j{{"kind", to_string(n.kind)}};
    switch (n.kind) {
      case NodeKind::pose_bin: j["rotation_offset"] = n.rotation_offset; break;
      case NodeKind::cluster: j["representative"] = n.representative_id; break;
      case NodeKind::leaf: j["model_id"] = n.model_id; break;
      case NodeKind::root: break;
    }
    if (n.kind != NodeKind::leaf) {
      json children = json::array();
      for (int c : n.children) children.push_back(dump(c));
      j["children"] = std::move(children);
    }
    return j;
  };
  const json doc{{"schema_version", kTreeSchemaVersion},
                 {"class_label", class_label_},
                 {"pose_bins", pose_bins_},
                 {"branching", branching_},
                 {"root", dump(0)}};
  return doc.dump(1) + "\n";
}

HocTree HocTree::from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("malformed tree file: ") + e.what(),
                "offset " + std::to_string(e.byte));
  }
  auto require = [](const json& j, const char* key, const std::string& where) -> const json& {
    if (!j.is_object() || !j.contains(key)) {
      throw Error(ErrorCode::parse_error, std::string("missing field '") + key + "'", where);
    }
    return j.at(key);
  };
  HocTree tree;
  try {
    const int version = require(doc, "schema_version", "document").get<int>();
    if (version != kTreeSchemaVersion) {
      throw Error(ErrorCode::parse_error, "unsupported tree schema_version " + std::to_string(version), "document");
    }
    tree.class_label_ = require(doc, "class_label", "document").get<std::string>();
    tree.pose_bins_ = require(doc, "pose_bins", "document").get<int>();
    tree.branching_ = require(doc, "branching", "document").get<int>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("bad header field: ") + e.what(), "document");
  }

  std::function<int(const json&, const std::string&)> read = [&](const json& j, const std::string& where) -> int {
    HocNode n;
    try {
      const auto kind = require(j, "kind", where).get<std::string>();
      if (kind == "root") {
        n.kind = NodeKind::root;
      } else if (kind == "pose_bin") {
        n.kind = NodeKind::pose_bin;
        n.rotation_offset = require(j, "rotation_offset", where).get<double>();
      } else if (kind == "cluster") {
        n.kind = NodeKind::cluster;
        n.representative_id = require(j, "representative", where).get<std::string>();
      } else if (kind == "leaf") {
        n.kind = NodeKind::leaf;
        n.model_id = require(j, "model_id", where).get<std::string>();
      } else {
        throw Error(ErrorCode::parse_error, "unknown node kind '" + kind + "'", where);
      }
    } catch (const json::exception& e) {
      throw Error(ErrorCode::parse_error, std::string("bad node field: ") + e.what(), where);
    }
    const int id = static_cast<int>(tree.nodes_.size());
    tree.nodes_.push_back(n);
    if (n.kind != NodeKind::leaf) {
      const json& children = require(j, "children", where);
      if (!children.is_array()) throw Error(ErrorCode::parse_error, "'children' must be a list", where);
      std::vector<int> ids;
      for (std::size_t k = 0; k < children.size(); ++k) {
        ids.push_back(read(children[k], where + ".children[" + std::to_string(k) + "]"));
      }
      tree.nodes_[static_cast<std::size_t>(id)].children = std::move(ids);
    }
    return id;
  };
  read(require(doc, "root", "document"), "root");
  tree.finalize();
  tree.validate();
  return tree;
}

void save_tree(const HocTree& tree, const std::filesystem::path& file) { write_text_file(file, tree.to_json()); }

HocTree load_tree(const std::filesystem::path& file) { return HocTree::from_json(read_text_file(file)); }

}  // namespace cadfit
