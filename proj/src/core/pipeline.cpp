#include "cadfit/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <thread>

#include <Eigen/Eigenvalues>

#include "cadfit/error.hpp"
#include "cadfit/metrics.hpp"
#include "cadfit/refine.hpp"

namespace cadfit {

namespace {

struct Footprint {
  double azimuth = 0.0;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Zero();
};

Footprint footprint_at(std::span<const Vec3> points, double azimuth) {
  const double c = std::cos(azimuth), s = std::sin(azimuth);
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& p : points) {
    const Vec3 q(c * p.x() + s * p.y(), -s * p.x() + c * p.y(), p.z());
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  const Vec3 mid = 0.5 * (lo + hi);
  Footprint f;
  f.azimuth = azimuth;
  f.center = Vec3(c * mid.x() - s * mid.y(), s * mid.x() + c * mid.y(), mid.z());
  f.size = hi - lo;
  return f;
}

// Azimuth of the smallest-area horizontal rectangle within `center` +- `range`.
double min_area_azimuth(std::span<const Vec3> points, double center, double range, int steps) {
  auto area = [&](double a) {
    const auto f = footprint_at(points, a);
    return f.size.x() * f.size.y();
  };
  const double step = 2.0 * range / steps;
  double best_a = center, best = area(center);
  for (int i = 0; i <= steps; ++i) {
    const double a = center - range + i * step;
    const double v = area(a);
    if (v < best - 1e-12) {
      best = v;
      best_a = a;
    }
  }
  for (double h = step / 2.0; h > 1e-10; h /= 2.0) {
    for (double cand : {best_a - h, best_a + h}) {
      const double v = area(cand);
      if (v < best - 1e-15) {
        best = v;
        best_a = cand;
      }
    }
  }
  return best_a;
}

double wrap_half_turn(double a) {
  // (-pi/2, pi/2]: a box axis and its opposite describe the same azimuth.
  while (a > std::numbers::pi / 2.0) a -= std::numbers::pi;
  while (a <= -std::numbers::pi / 2.0) a += std::numbers::pi;
  return a;
}

std::string format_score(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

void record(Annotation& a, EventKind kind, std::string detail) {
  a.provenance.push_back({kind, std::move(detail), a.score.total});
}

const SceneObject* find_object(const Scene& scene, const std::string& instance_id) {
  for (const auto& o : scene.objects) {
    if (o.instance_id == instance_id) return &o;
  }
  return nullptr;
}

constexpr double kAzimuthPolish = 12.0 * std::numbers::pi / 180.0;
constexpr double kIsotropic = 0.05;

}  // namespace

Pose9D init_pose(const PointCloud& cloud) {
  const auto& pts = cloud.points;
  if (pts.empty()) throw Error(ErrorCode::degenerate, "degenerate point set", "no points");
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  for (const auto& p : pts) mean += p.head<2>();
  mean /= static_cast<double>(pts.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& p : pts) {
    const Eigen::Vector2d d = p.head<2>() - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(pts.size());
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(cov);
  const double hi = eig.eigenvalues()(1), lo = eig.eigenvalues()(0);
  double azimuth;
  // Near-square footprints have no reliable principal axis.
  if (!(hi > 0.0) || (hi - lo) <= kIsotropic * hi) {
    azimuth = min_area_azimuth(pts, std::numbers::pi / 4.0, std::numbers::pi / 4.0, 90);
  } else {
    // Partial views bias the principal axis; snap to the tightest nearby box.
    const Eigen::Vector2d major = eig.eigenvectors().col(1);
    azimuth = min_area_azimuth(pts, std::atan2(major.y(), major.x()), kAzimuthPolish, 24);
  }
  azimuth = wrap_half_turn(azimuth);
  const auto f = footprint_at(pts, azimuth);
  if ((f.size.array() < 1e-9).any()) throw Error(ErrorCode::degenerate, "degenerate point set", "zero box extent");
  Pose9D pose;
  pose.translation = f.center;
  pose.rotation = Vec3(0.0, 0.0, azimuth);
  pose.scale = f.size;
  return pose;
}

Pose9D init_pose(const SceneObject& object) { return init_pose(object.points); }

std::vector<double> symmetry_chamfers(const TriMesh& mesh, const SymmetryOptions& options) {
  mesh.validate();
  if (mesh.empty()) throw Error(ErrorCode::degenerate, "degenerate mesh", "no triangles");
  const TriMesh base = normalize_to_unit_diagonal(mesh);
  const PointCloud ref = sample_surface(base, options.samples, options.seed);
  const KdTree ref_index(ref.points);
  std::vector<double> out;
  for (int k = 1; k < 8; ++k) {
    Pose9D turn;
    turn.rotation = Vec3(0.0, 0.0, k * std::numbers::pi / 4.0);
    const PointCloud rotated = sample_surface(apply_pose(base, turn), options.samples, options.seed + k);
    const KdTree rot_index(rotated.points);
    out.push_back(one_sided_chamfer(ref.points, rot_index, ChamferNorm::euclidean) +
                  one_sided_chamfer(rotated.points, ref_index, ChamferNorm::euclidean));
  }
  return out;
}

Symmetry classify_symmetry(const TriMesh& mesh, const SymmetryOptions& options) {
  const auto cd = symmetry_chamfers(mesh, options);
  auto match = [&](int k) { return cd[static_cast<std::size_t>(k - 1)] < options.threshold; };
  if (std::all_of(cd.begin(), cd.end(), [&](double v) { return v < options.threshold; })) return Symmetry::infinite;
  if (match(2) && match(4) && match(6)) return Symmetry::four_fold;
  if (match(4)) return Symmetry::two_fold;
  return Symmetry::none;
}

Symmetry classify_annotation(const Annotation& annotation, const CadDatabase& database,
                             const SymmetryOptions& options) {
  Pose9D scale_only;
  scale_only.scale = annotation.pose.scale;
  return classify_symmetry(apply_pose(database.at(annotation.cad_id).mesh, scale_only), options);
}

TreeSet load_trees(const std::filesystem::path& directory) {
  if (!std::filesystem::is_directory(directory)) {
    throw Error(ErrorCode::io_error, "tree directory not found", directory.string());
  }
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(directory)) {
    if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  TreeSet trees;
  for (const auto& f : files) {
    HocTree t = load_tree(f);
    const std::string label = t.class_label();
    if (!trees.emplace(label, std::move(t)).second) {
      throw Error(ErrorCode::invalid_argument, "two trees for class '" + label + "'", f.string());
    }
  }
  return trees;
}

void PipelineConfig::validate() const {
  search.validate();
  weights.validate();
  if (final_refine_steps < 0) throw Error(ErrorCode::invalid_argument, "final_refine_steps must be >= 0");
  if (!(clone.tau >= 0.0)) throw Error(ErrorCode::invalid_argument, "clone tau must be >= 0");
  if (threads < 1) throw Error(ErrorCode::invalid_argument, "threads must be >= 1");
  if (max_points < 1) throw Error(ErrorCode::invalid_argument, "max_points must be >= 1");
}

std::uint64_t object_seed(std::uint64_t seed, const std::string& instance_id) {
  std::uint64_t h = stable_hash(instance_id) ^ (seed + 0x9e3779b97f4a7c15ULL + (seed << 6) + (seed >> 2));
  h ^= h >> 33;
  h *= 0xff51afd7ed558ccdULL;
  h ^= h >> 33;
  return h;
}

namespace {

RefineConfig final_refine_config(const PipelineConfig& config) {
  RefineConfig r = config.search.refine;
  r.steps = config.final_refine_steps;
  r.deadline.reset();
  return r;
}

struct ObjectOutcome {
  std::optional<Annotation> annotation;
  std::optional<AnnotationFailure> failure;
  std::optional<std::string> warning;
  std::optional<SearchResult> search;
};

ObjectOutcome annotate_object(const SceneObject& object, const CadDatabase& database, const TreeSet& trees,
                              const PipelineConfig& config) {
  ObjectOutcome out;
  const auto tree = trees.find(object.class_label);
  if (tree == trees.end()) {
    out.warning = "skipped " + object.instance_id + ": no tree for class '" + object.class_label + "'";
    return out;
  }
  try {
    const Pose9D init = init_pose(object.points);
    const Observation obs = Observation::from_scene_object(object, config.max_points);
    SearchConfig sc = config.search;
    sc.seed = object_seed(config.seed, object.instance_id);
    sc.objective = config.search.objective;
    const SearchResult found = search(tree->second, database, obs, init, config.weights, sc);

    Annotation a;
    a.instance_id = object.instance_id;
    a.class_label = object.class_label;
    a.cad_id = found.cad_id;
    a.cad_class = database.at(found.cad_id).class_label;
    a.pose = found.pose;
    a.score = found.score;
    record(a, EventKind::search,
           "cad_id=" + found.cad_id + " bin=" + std::to_string(found.pose_bin) +
               " iterations=" + std::to_string(found.iterations_run) +
               " refinements=" + std::to_string(found.refinements_run));
    if (config.final_refine_steps > 0) {
      const auto r = refine(database.at(a.cad_id), a.pose, obs, config.weights, final_refine_config(config),
                            config.search.objective);
      a.pose = r.pose;
      a.score = r.score;
      record(a, EventKind::refine, "steps=" + std::to_string(r.steps_completed));
    }
    out.annotation = std::move(a);
    out.search = found;
  } catch (const Error& e) {
    out.failure = AnnotationFailure{object.instance_id, std::string(to_string(e.code())), e.what()};
  }
  return out;
}

}  // namespace

AnnotationSet annotate_scene(const Scene& scene, const CadDatabase& database, const TreeSet& trees,
                             const PipelineConfig& config, std::map<std::string, SearchResult>* searches) {
  config.validate();
  AnnotationSet set;
  set.scene_id = scene.scene_id;
  set.weights = config.weights;

  std::vector<ObjectOutcome> outcomes(scene.objects.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < outcomes.size(); i = next++) {
      outcomes[i] = annotate_object(scene.objects[i], database, trees, config);
    }
  };
  const int n_threads = std::min<int>(config.threads, static_cast<int>(std::max<std::size_t>(1, outcomes.size())));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& o : outcomes) {
    if (o.search && searches) (*searches)[o.annotation->instance_id] = std::move(*o.search);
    if (o.annotation) set.annotations.push_back(std::move(*o.annotation));
    if (o.failure) set.failures.push_back(std::move(*o.failure));
    if (o.warning) set.warnings.push_back(std::move(*o.warning));
  }

  if (config.clone.enabled) cluster_and_clone(set, scene, database, config);

  for (auto& a : set.annotations) {
    try {
      a.symmetry = classify_annotation(a, database, config.symmetry);
      record(a, EventKind::classify, std::string(to_string(a.symmetry)));
    } catch (const Error& e) {
      set.warnings.push_back("symmetry of " + a.instance_id + " not classified: " + e.what());
    }
  }
  return set;
}

double clone_distance(const CadModel& a, const CadModel& b) {
  // Canonical samples live in the unit cube; rescale to unit diagonal.
  return (one_sided_chamfer(a.samples.points, b.index, ChamferNorm::euclidean) +
          one_sided_chamfer(b.samples.points, a.index, ChamferNorm::euclidean)) /
         std::sqrt(3.0);
}

void cluster_and_clone(AnnotationSet& annotations, const Scene& scene, const CadDatabase& database,
                       const PipelineConfig& config) {
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < annotations.annotations.size(); ++i) {
    const auto& a = annotations.annotations[i];
    if (a.status == Status::removed || !config.clone.classes.count(a.class_label)) continue;
    if (!find_object(scene, a.instance_id) || !database.contains(a.cad_id)) continue;
    by_class[a.class_label].push_back(i);
  }

  std::map<std::string, Observation> observations;
  auto observation = [&](const std::string& instance_id) -> const Observation& {
    auto it = observations.find(instance_id);
    if (it == observations.end()) {
      it = observations.emplace(instance_id, Observation::from_scene_object(*find_object(scene, instance_id),
                                                                            config.max_points)).first;
    }
    return it->second;
  };

  for (const auto& [label, members] : by_class) {
    if (members.size() < 2) continue;
    const std::size_t n = members.size();
    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto& ci = annotations.annotations[members[i]].cad_id;
        const auto& cj = annotations.annotations[members[j]].cad_id;
        const double d = ci == cj ? 0.0 : clone_distance(database.at(ci), database.at(cj));
        dist[i * n + j] = dist[j * n + i] = d;
      }
    }
    // Complete linkage, merging while the closest pair of groups is within tau.
    std::vector<std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < n; ++i) groups.push_back({i});
    while (groups.size() > 1) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t ga = 0, gb = 0;
      for (std::size_t a = 0; a < groups.size(); ++a) {
        for (std::size_t b = a + 1; b < groups.size(); ++b) {
          double link = 0.0;
          for (auto x : groups[a]) {
            for (auto y : groups[b]) link = std::max(link, dist[x * n + y]);
          }
          if (link < best) {
            best = link;
            ga = a;
            gb = b;
          }
        }
      }
      if (!(best <= config.clone.tau)) break;
      groups[ga].insert(groups[ga].end(), groups[gb].begin(), groups[gb].end());
      std::sort(groups[ga].begin(), groups[ga].end());
      groups.erase(groups.begin() + static_cast<std::ptrdiff_t>(gb));
    }

    for (const auto& group : groups) {
      if (group.size() < 2) continue;
      std::set<std::string> candidates;
      for (auto g : group) candidates.insert(annotations.annotations[members[g]].cad_id);
      if (candidates.size() < 2) continue;
      std::string winner;
      double winner_sum = std::numeric_limits<double>::infinity();
      for (const auto& cad : candidates) {
        double sum = 0.0;
        for (auto g : group) {
          const auto& a = annotations.annotations[members[g]];
          sum += rc_score(observation(a.instance_id), database.at(cad), a.pose, annotations.weights,
                          config.search.objective).total;
        }
        if (sum < winner_sum) {
          winner_sum = sum;
          winner = cad;
        }
      }
      for (auto g : group) {
        auto& a = annotations.annotations[members[g]];
        if (a.cad_id == winner) continue;
        const std::string previous = a.cad_id;
        const Observation& obs = observation(a.instance_id);
        a.cad_id = winner;
        a.cad_class = database.at(winner).class_label;
        a.score = rc_score(obs, database.at(winner), a.pose, annotations.weights, config.search.objective);
        record(a, EventKind::clone, "cad_id=" + previous + " -> " + winner + " group_sum=" + format_score(winner_sum));
        if (config.final_refine_steps > 0) {
          const auto r = refine(database.at(winner), a.pose, obs, annotations.weights, final_refine_config(config),
                                config.search.objective);
          a.pose = r.pose;
          a.score = r.score;
          record(a, EventKind::refine, "steps=" + std::to_string(r.steps_completed));
        }
      }
    }
  }
}

}  // namespace cadfit
