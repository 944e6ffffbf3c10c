#include "cadfit/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <random>

#include "cadfit/error.hpp"
#include "cadfit/hoc_tree.hpp"
#include "cadfit/pipeline.hpp"

namespace cadfit {

TriMesh make_box(const Vec3& lo, const Vec3& hi) {
  TriMesh m;
  for (int i = 0; i < 8; ++i) {
    m.vertices.emplace_back(i & 1 ? hi.x() : lo.x(), i & 2 ? hi.y() : lo.y(), i & 4 ? hi.z() : lo.z());
  }
  m.triangles = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                 {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

TriMesh make_cylinder(const Vec3& base_center, double radius, double height, int segments) {
  if (segments < 3) throw Error(ErrorCode::invalid_argument, "cylinder needs >= 3 segments");
  TriMesh m;
  const auto n = static_cast<std::uint32_t>(segments);
  for (std::uint32_t i = 0; i < n; ++i) {
    const double a = 2.0 * std::numbers::pi * i / n;
    const Vec3 off(radius * std::cos(a), radius * std::sin(a), 0.0);
    m.vertices.push_back(base_center + off);
    m.vertices.push_back(base_center + off + Vec3(0.0, 0.0, height));
  }
  const std::uint32_t bottom = 2 * n, top = 2 * n + 1;
  m.vertices.push_back(base_center);
  m.vertices.push_back(base_center + Vec3(0.0, 0.0, height));
  for (std::uint32_t i = 0; i < n; ++i) {
    const std::uint32_t j = (i + 1) % n;
    m.triangles.push_back({2 * i, 2 * j, 2 * i + 1});
    m.triangles.push_back({2 * j, 2 * j + 1, 2 * i + 1});
    m.triangles.push_back({bottom, 2 * j, 2 * i});
    m.triangles.push_back({top, 2 * i + 1, 2 * j + 1});
  }
  return m;
}

TriMesh make_l_bracket(double w, double d, double h, double t) {
  const std::vector<TriMesh> parts{make_box({0, 0, 0}, {w, d, t}), make_box({0, d - t, t}, {w, d, h})};
  return merge(parts);
}

const std::vector<std::string>& synth_classes() {
  static const std::vector<std::string> classes{"chair", "table", "cabinet", "sofa", "bookshelf", "display"};
  return classes;
}

Vec3 class_nominal_size(const std::string& c) {
  if (c == "chair") return {0.5, 0.5, 0.9};
  if (c == "table") return {1.2, 0.8, 0.75};
  if (c == "cabinet") return {0.8, 0.5, 1.0};
  if (c == "sofa") return {1.8, 0.9, 0.8};
  if (c == "bookshelf") return {0.9, 0.35, 1.8};
  if (c == "display") return {0.6, 0.25, 0.45};
  throw Error(ErrorCode::invalid_argument, "unknown synthetic class '" + c + "'");
}

namespace {

// All shapes are built inside the unit cube with the front facing -y.
struct Builder {
  const std::vector<double>& u;
  std::vector<TriMesh> parts;

  double p(std::size_t i) const { return i < u.size() ? std::clamp(u[i], 0.0, 1.0) : 0.5; }
  void box(double x0, double y0, double z0, double x1, double y1, double z1) {
    parts.push_back(make_box({x0, y0, z0}, {x1, y1, z1}));
  }
  TriMesh done() const { return merge(parts); }
};

TriMesh chair(const std::vector<double>& u) {
  Builder b{u, {}};
  const double leg = 0.06 + 0.06 * b.p(0);
  const double seat_z = 0.25 + 0.4 * b.p(1);
  const double seat_t = 0.05 + 0.05 * b.p(2);
  const double back_t = 0.06 + 0.08 * b.p(3);
  const double inset = 0.1 * b.p(6);
  for (double x : {inset, 1.0 - inset - leg}) {
    b.box(x, inset, 0.0, x + leg, inset + leg, seat_z);
  }
  b.box(inset, 1.0 - back_t, 0.0, inset + leg, 1.0, seat_z);
  b.box(1.0 - inset - leg, 1.0 - back_t, 0.0, 1.0 - inset, 1.0, seat_z);
  b.box(0.0, 0.0, seat_z, 1.0, 1.0, seat_z + seat_t);
  if (b.p(4) < 0.5) {
    b.box(0.0, 1.0 - back_t, seat_z + seat_t, 1.0, 1.0, 1.0);
  } else {
    const double gap = 0.12 + 0.2 * b.p(7);
    b.box(0.0, 1.0 - back_t, seat_z + seat_t, 0.12, 1.0, 1.0);
    b.box(0.88, 1.0 - back_t, seat_z + seat_t, 1.0, 1.0, 1.0);
    b.box(0.12, 1.0 - back_t, seat_z + seat_t + gap, 0.88, 1.0, 1.0);
  }
  if (b.p(5) > 0.6) {
    const double arm_z = seat_z + seat_t + 0.2;
    b.box(0.0, 0.15, arm_z, 0.08, 1.0 - back_t, arm_z + 0.05);
    b.box(0.92, 0.15, arm_z, 1.0, 1.0 - back_t, arm_z + 0.05);
  }
  return b.done();
}

TriMesh table(const std::vector<double>& u) {
  Builder b{u, {}};
  const double top_t = 0.04 + 0.16 * b.p(0);
  b.box(0.0, 0.0, 1.0 - top_t, 1.0, 1.0, 1.0);
  if (b.p(1) < 0.6) {
    const double leg = 0.05 + 0.07 * b.p(2);
    const double ix = 0.15 * b.p(3), iy = 0.15 * b.p(5);
    for (double x : {ix, 1.0 - ix - leg}) {
      for (double y : {iy, 1.0 - iy - leg}) b.box(x, y, 0.0, x + leg, y + leg, 1.0 - top_t);
    }
    if (b.p(4) > 0.5) {
      // Apron on three sides only, leaving a front/back distinction.
      b.box(ix, 1.0 - iy - leg, 0.8 - top_t, 1.0 - ix, 1.0 - iy, 1.0 - top_t);
      b.box(ix, iy, 0.8 - top_t, ix + leg, 1.0 - iy, 1.0 - top_t);
      b.box(1.0 - ix - leg, iy, 0.8 - top_t, 1.0 - ix, 1.0 - iy, 1.0 - top_t);
    }
  } else {
    const double r = 0.06 + 0.08 * b.p(2);
    const double foot = 0.3 + 0.15 * b.p(3);
    const double cy = 0.4 + 0.2 * b.p(5);
    b.parts.push_back(make_cylinder({0.5, cy, 0.0}, r, 1.0 - top_t, 20));
    b.box(0.5 - foot, cy - 0.06, 0.0, 0.5 + foot, cy + 0.06, 0.05);
    b.box(0.5 - 0.06, cy - foot * 0.8, 0.0, 0.5 + 0.06, cy + foot * 0.8, 0.05);
  }
  return b.done();
}

TriMesh cabinet(const std::vector<double>& u) {
  Builder b{u, {}};
  const double plinth = 0.03 + 0.07 * b.p(0);
  const double split = 0.2 + 0.6 * b.p(1);  // top of the closed lower section
  const double niche = 0.25 + 0.55 * b.p(2);  // depth of the open upper niche
  const double wall = 0.04 + 0.04 * b.p(3);
  b.box(0.04, 0.04, 0.0, 0.96, 0.96, plinth);
  b.box(0.0, 0.0, plinth, 1.0, 1.0, split);
  b.box(0.0, 0.0, split, wall, 1.0, 1.0);
  b.box(1.0 - wall, 0.0, split, 1.0, 1.0, 1.0);
  b.box(wall, 0.0, 1.0 - wall, 1.0 - wall, 1.0, 1.0);
  b.box(wall, niche, split, 1.0 - wall, 1.0, 1.0 - wall);
  if (b.p(4) > 0.5) {
    b.box(0.45, 0.0, split - 0.08, 0.55, 0.02, split - 0.05);
  }
  return b.done();
}

TriMesh sofa(const std::vector<double>& u) {
  Builder b{u, {}};
  const double back_d = 0.15 + 0.35 * b.p(0);
  const double seat_z = 0.25 + 0.35 * b.p(1);
  const double arm_w = 0.08 + 0.1 * b.p(2);
  const double arm_z = seat_z + 0.1 + 0.2 * b.p(3);
  const bool arms = b.p(4) > 0.2;
  const double foot = 0.1;
  for (double x : {0.02, 0.92}) {
    for (double y : {0.02, 0.88}) b.box(x, y, 0.0, x + 0.06, y + 0.1, foot);
  }
  const double x0 = arms ? arm_w : 0.0, x1 = arms ? 1.0 - arm_w : 1.0;
  b.box(x0, 0.0, foot, x1, 1.0 - back_d, seat_z);
  b.box(0.0, 1.0 - back_d, foot, 1.0, 1.0, 1.0);
  if (arms) {
    b.box(0.0, 0.0, foot, arm_w, 1.0 - back_d, arm_z);
    b.box(1.0 - arm_w, 0.0, foot, 1.0, 1.0 - back_d, arm_z);
  }
  return b.done();
}

TriMesh bookshelf(const std::vector<double>& u) {
  Builder b{u, {}};
  const double t = 0.03 + 0.04 * b.p(0);
  const int shelves = 1 + static_cast<int>(std::floor(4.999 * b.p(1)));
  b.box(0.0, 0.0, 0.0, t, 1.0, 1.0);
  b.box(1.0 - t, 0.0, 0.0, 1.0, 1.0, 1.0);
  b.box(t, 0.0, 0.0, 1.0 - t, 1.0, t);
  b.box(t, 0.0, 1.0 - t, 1.0 - t, 1.0, 1.0);
  const double back = 0.05 + 0.3 * b.p(2);
  b.box(t, 1.0 - back, t, 1.0 - t, 1.0, 1.0 - t);
  for (int s = 1; s <= shelves; ++s) {
    const double z = static_cast<double>(s) / (shelves + 1);
    b.box(t, 0.0, z - t / 2, 1.0 - t, 1.0 - back, z + t / 2);
  }
  return b.done();
}

TriMesh display(const std::vector<double>& u) {
  Builder b{u, {}};
  const double screen_t = 0.06 + 0.08 * b.p(0);
  const double screen_z = 0.1 + 0.4 * b.p(1);
  const double neck_w = 0.08 + 0.1 * b.p(2);
  const double base_w = 0.3 + 0.3 * b.p(3);
  const double sy = 0.1 + 0.5 * b.p(4);
  b.box(0.0, sy, screen_z, 1.0, sy + screen_t, 1.0);
  b.box(0.5 - neck_w / 2, sy + screen_t, 0.04, 0.5 + neck_w / 2, sy + screen_t + 0.12, screen_z + 0.15);
  b.box(0.5 - base_w / 2, 0.0, 0.0, 0.5 + base_w / 2, 1.0, 0.04);
  return b.done();
}

constexpr int kParamCount = 8;

}  // namespace

TriMesh make_furniture(const std::string& c, const std::vector<double>& params) {
  if (c == "chair") return chair(params);
  if (c == "table") return table(params);
  if (c == "cabinet") return cabinet(params);
  if (c == "sofa") return sofa(params);
  if (c == "bookshelf") return bookshelf(params);
  if (c == "display") return display(params);
  throw Error(ErrorCode::invalid_argument, "unknown synthetic class '" + c + "'");
}

CadDatabase make_synth_database(const SynthDatabaseOptions& options) {
  if (options.models_per_class < 1 || options.family_size < 1) {
    throw Error(ErrorCode::invalid_argument, "models_per_class and family_size must be >= 1");
  }
  const auto& classes = options.classes.empty() ? synth_classes() : options.classes;
  CadDatabase db;
  for (const auto& c : classes) {
    std::mt19937_64 rng(options.seed ^ stable_hash(c));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> jitter(0.0, options.family_jitter);
    std::vector<double> base(kParamCount);
    std::vector<CadModelPtr> heads;
    for (int m = 0; m < options.models_per_class; ++m) {
      char id[64];
      std::snprintf(id, sizeof id, "%s_%03d", c.c_str(), m);
      if (m % options.family_size == 0) {
        CadModelPtr best;
        double best_gap = -1.0;
        std::vector<double> best_params;
        for (int attempt = 0; attempt < std::max(1, options.separation_attempts); ++attempt) {
          for (auto& v : base) v = unit(rng);
          CadModelPtr model = make_cad_model(id, c, make_furniture(c, base), options.samples);
          double gap = std::numeric_limits<double>::infinity();
          for (const auto& h : heads) gap = std::min(gap, shape_distance(*h, *model));
          if (gap > best_gap) {
            best_gap = gap;
            best = model;
            best_params = base;
          }
          if (options.min_separation <= 0.0 || gap >= options.min_separation) break;
        }
        base = best_params;
        heads.push_back(best);
        db.add(best);
        continue;
      }
      // Jitter only the continuous proportions, keep discrete style choices.
      std::vector<double> params(kParamCount);
      for (std::size_t k = 0; k < params.size(); ++k) params[k] = std::clamp(base[k] + jitter(rng), 0.0, 1.0);
      for (std::size_t k : {1, 4, 5}) params[k] = base[k];
      db.add(make_cad_model(id, c, make_furniture(c, params), options.samples));
    }
  }
  return db;
}

SynthScene make_synth_scene(const CadDatabase& database, const SynthSceneOptions& options) {
  if (options.views_per_object < 1) throw Error(ErrorCode::invalid_argument, "views_per_object must be >= 1");
  std::mt19937_64 rng(options.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  std::vector<CadModelPtr> pool;
  for (const auto& m : database.models()) {
    if (options.classes.empty() ||
        std::find(options.classes.begin(), options.classes.end(), m->class_label) != options.classes.end()) {
      pool.push_back(m);
    }
  }
  std::vector<CadModelPtr> chosen;
  if (!options.cad_ids.empty()) {
    for (const auto& id : options.cad_ids) {
      auto m = database.find(id);
      if (!m) throw Error(ErrorCode::not_found, "unknown CAD model", id);
      chosen.push_back(m);
    }
  } else {
    if (pool.empty()) throw Error(ErrorCode::invalid_argument, "no CAD models to draw from");
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (int i = 0; i < options.objects; ++i) chosen.push_back(pool[pick(rng)]);
  }

  // Poses: random azimuth and per-axis scale, rejection-sampled positions.
  std::vector<Pose9D> poses;
  const double area = 2.0 + 1.6 * std::sqrt(static_cast<double>(chosen.size()));
  for (const auto& m : chosen) {
    Pose9D pose;
    const Vec3 nominal = m->class_label.empty() ? Vec3(1, 1, 1) : class_nominal_size(m->class_label);
    for (int k = 0; k < 3; ++k) pose.scale[k] = nominal[k] * (1.0 + options.scale_jitter * (2.0 * unit(rng) - 1.0));
    pose.rotation = Vec3(0.0, 0.0, 2.0 * std::numbers::pi * unit(rng) - std::numbers::pi);
    const double radius = 0.5 * std::hypot(pose.scale.x(), pose.scale.y());
    for (int attempt = 0;; ++attempt) {
      const double spread = area * (1.0 + 0.05 * (attempt / 50));
      const Vec3 t(spread * (2.0 * unit(rng) - 1.0), spread * (2.0 * unit(rng) - 1.0), 0.5 * pose.scale.z());
      bool clear = true;
      for (const auto& other : poses) {
        const double r2 = 0.5 * std::hypot(other.scale.x(), other.scale.y());
        if ((t.head<2>() - other.translation.head<2>()).norm() < radius + r2 + options.min_gap) clear = false;
      }
      if (clear) {
        pose.translation = t;
        break;
      }
    }
    poses.push_back(pose);
  }

  // Whole-scene mesh with a triangle -> object map for instance masks.
  std::vector<TriMesh> posed;
  std::vector<int> owner;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    posed.push_back(apply_pose(chosen[i]->mesh, poses[i]));
    owner.insert(owner.end(), posed.back().triangles.size(), static_cast<int>(i));
  }
  const TriMesh world = merge(posed);
  const Intrinsics intr =
      Intrinsics::from_fov(options.width, options.height, options.horizontal_fov_deg * std::numbers::pi / 180.0);

  SynthScene out;
  out.scene.scene_id = options.scene_id;
  out.ground_truth.scene_id = options.scene_id;
  const double elev = options.camera_elevation_deg * std::numbers::pi / 180.0;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    SceneObject obj;
    char id[32];
    std::snprintf(id, sizeof id, "obj%02zu", i);
    obj.instance_id = id;
    obj.class_label = chosen[i]->class_label;
    const Vec3 target = poses[i].translation;
    const double a0 = 2.0 * std::numbers::pi * unit(rng);
    for (int v = 0; v < options.views_per_object; ++v) {
      const double a = a0 + 2.0 * std::numbers::pi * v / options.views_per_object;
      const Vec3 eye = target + options.camera_distance *
                                    Vec3(std::cos(elev) * std::cos(a), std::cos(elev) * std::sin(a), std::sin(elev));
      CameraView view;
      view.intrinsics = intr;
      view.world_to_camera = CameraView::look_at(eye, target);
      const LabeledRender lr = rasterize_labeled(world, view);
      DepthImage masked(intr.width, intr.height);
      for (std::size_t px = 0; px < masked.values.size(); ++px) {
        const auto tri = lr.triangle[px];
        if (tri >= 0 && owner[static_cast<std::size_t>(tri)] == static_cast<int>(i)) {
          masked.values[px] = lr.render.depth.values[px];
        }
      }
      const PointCloud pts = backproject(masked, view);
      obj.points.points.insert(obj.points.points.end(), pts.points.begin(), pts.points.end());
      view.depth = std::move(masked);
      obj.views.push_back(std::move(view));
    }
    out.scene.objects.push_back(std::move(obj));

    Annotation gt;
    gt.instance_id = id;
    gt.class_label = chosen[i]->class_label;
    gt.cad_id = chosen[i]->id;
    gt.cad_class = chosen[i]->class_label;
    gt.pose = poses[i];
    if (options.classify_gt_symmetry) {
      Pose9D scale_only;
      scale_only.scale = poses[i].scale;
      gt.symmetry = classify_symmetry(apply_pose(chosen[i]->mesh, scale_only));
    }
    out.ground_truth.annotations.push_back(std::move(gt));
  }
  return out;
}

}  // namespace cadfit
