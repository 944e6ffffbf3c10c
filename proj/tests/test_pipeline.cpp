#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "cadfit/annotation.hpp"
#include "cadfit/error.hpp"
#include "cadfit/pipeline.hpp"
#include "cadfit/synth.hpp"
#include "oracles.hpp"

using namespace cadfit;

namespace {

PointCloud box_points(const Vec3& lo, const Vec3& hi, std::uint64_t seed = 1) {
  return sample_surface(make_box(lo, hi), 4000, seed);
}

double azimuth_of(const Pose9D& p) {
  const Vec3 x = p.rotation_matrix().col(0);
  return std::atan2(x.y(), x.x());
}

PipelineConfig quick_config() {
  PipelineConfig cfg;
  cfg.search.max_iterations = 8;
  cfg.search.refine_steps = 0;
  cfg.final_refine_steps = 0;
  cfg.max_points = 400;
  return cfg;
}

TreeSet trees_for(const CadDatabase& db) {
  TreeSet trees;
  for (const auto& c : db.classes()) trees.emplace(c, build_tree(db.models(), c));
  return trees;
}

SynthSceneOptions small_scene(std::uint64_t seed, int objects) {
  SynthSceneOptions so;
  so.objects = objects;
  so.width = 64;
  so.height = 48;
  so.seed = seed;
  so.views_per_object = 2;
  return so;
}

double cluster_sum(const AnnotationSet& set, const Scene& scene, const CadDatabase& db, const std::vector<std::string>& ids) {
  double sum = 0.0;
  for (const auto& id : ids) {
    const Annotation& a = *set.find(id);
    for (const auto& o : scene.objects) {
      if (o.instance_id == id) sum += rc_score(Observation::from_scene_object(o, 400), db.at(a.cad_id), a.pose, set.weights).total;
    }
  }
  return sum;
}

}  // namespace

TEST_CASE("init_pose on boxes") {
  const Pose9D cube = init_pose(box_points({-0.5, -0.5, -0.5}, {0.5, 0.5, 0.5}));
  CHECK(cube.translation.norm() < 1e-6);
  std::vector<double> s{cube.scale.x(), cube.scale.y(), cube.scale.z()};
  for (double v : s) CHECK(v == doctest::Approx(1.0).epsilon(1e-3));

  const Pose9D moved = init_pose(box_points({1.5, -0.5, -0.5}, {2.5, 0.5, 0.5}));
  CHECK((moved.translation - Vec3(2, 0, 0)).norm() < 1e-6);

  PointCloud slab = box_points({-1.0, -0.5, -0.5}, {1.0, 0.5, 0.5});
  for (auto& p : slab.points) p = oracle::rot_z(M_PI / 4) * p;
  const Pose9D rotated = init_pose(slab);
  double az = std::fmod(azimuth_of(rotated) - M_PI / 4 + 2 * M_PI, M_PI);
  if (az > M_PI / 2) az -= M_PI;
  CHECK(std::abs(az) < 1e-3);
  // Rotation stays gravity aligned.
  CHECK((rotated.rotation_matrix().col(2) - Vec3::UnitZ()).norm() < 1e-9);

  CHECK_THROWS_AS(init_pose(PointCloud{}), Error);
  PointCloud flat;
  flat.points = {{0, 0, 0}, {0, 0, 0}};
  CHECK_THROWS_AS(init_pose(flat), Error);
}

TEST_CASE("symmetry classes of primitive shapes") {
  CHECK(classify_symmetry(make_box({-0.5, -0.5, 0}, {0.5, 0.5, 0.4})) == Symmetry::four_fold);
  CHECK(classify_symmetry(make_box({-0.8, -0.4, 0}, {0.8, 0.4, 0.6})) == Symmetry::two_fold);
  CHECK(classify_symmetry(make_cylinder({0, 0, 0}, 0.4, 1.0, 64)) == Symmetry::infinite);
  CHECK(classify_symmetry(make_l_bracket(1.0, 0.6, 0.8, 0.1)) == Symmetry::none);
  // Uniform scale does not matter.
  CHECK(classify_symmetry(apply_pose(make_box({-0.8, -0.4, 0}, {0.8, 0.4, 0.6}), [] {
          Pose9D p;
          p.scale = {7, 7, 7};
          return p;
        }())) == Symmetry::two_fold);
  TriMesh flat;
  flat.vertices = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
  flat.triangles = {{0, 1, 2}};
  CHECK_THROWS_AS(classify_symmetry(flat), Error);
}

TEST_CASE("annotate_scene: empty scene, order, failures and skipped classes") {
  SynthDatabaseOptions dbo;
  dbo.models_per_class = 2;
  dbo.samples = 1500;
  const CadDatabase db = make_synth_database(dbo);
  const TreeSet trees = trees_for(db);

  Scene empty;
  empty.scene_id = "empty";
  const AnnotationSet none = annotate_scene(empty, db, trees, quick_config());
  CHECK(none.annotations.empty());
  CHECK(none.failures.empty());

  SynthScene s = make_synth_scene(db, small_scene(3, 6));
  SceneObject& dead = s.scene.objects[2];
  for (auto& v : dead.views) v.depth = DepthImage(v.intrinsics.width, v.intrinsics.height);
  dead.points.points.clear();
  dead.partial_mesh.reset();
  const AnnotationSet out = annotate_scene(s.scene, db, trees, quick_config());
  CHECK(out.annotations.size() == 5);
  REQUIRE(out.failures.size() == 1);
  CHECK(out.failures[0].instance_id == dead.instance_id);
  std::vector<std::string> order;
  for (const auto& o : s.scene.objects) {
    if (o.instance_id != dead.instance_id) order.push_back(o.instance_id);
  }
  for (std::size_t i = 0; i < order.size(); ++i) CHECK(out.annotations[i].instance_id == order[i]);

  TreeSet partial = trees;
  const std::string missing = s.scene.objects[0].class_label;
  partial.erase(missing);
  const AnnotationSet skipped = annotate_scene(s.scene, db, partial, quick_config());
  CHECK_FALSE(skipped.warnings.empty());
  for (const auto& a : skipped.annotations) CHECK(a.class_label != missing);
}

TEST_CASE("annotate_scene is deterministic and records provenance") {
  SynthDatabaseOptions dbo;
  dbo.classes = {"chair", "table"};
  dbo.models_per_class = 3;
  dbo.samples = 1500;
  const CadDatabase db = make_synth_database(dbo);
  const TreeSet trees = trees_for(db);
  const SynthScene s = make_synth_scene(db, small_scene(5, 3));
  PipelineConfig cfg = quick_config();
  cfg.final_refine_steps = 3;
  cfg.search.refine_steps = 2;
  cfg.seed = 77;
  const std::string a = to_json(annotate_scene(s.scene, db, trees, cfg));
  const std::string b = to_json(annotate_scene(s.scene, db, trees, cfg));
  CHECK(a == b);
  cfg.threads = 3;
  CHECK(to_json(annotate_scene(s.scene, db, trees, cfg)) == a);

  const AnnotationSet set = annotations_from_json(a);
  for (const auto& ann : set.annotations) {
    REQUIRE(ann.provenance.size() >= 3);
    CHECK(ann.provenance.front().kind == EventKind::search);
    CHECK(ann.provenance.back().kind == EventKind::classify);
    CHECK(ann.provenance.back().score == ann.score.total);
    CHECK(ann.status == Status::auto_);
  }
}

TEST_CASE("cloning unifies identical shapes and leaves other classes alone") {
  SynthDatabaseOptions dbo;
  dbo.classes = {"chair", "sofa"};
  dbo.models_per_class = 2;
  CadDatabase base = make_synth_database(dbo);
  CadDatabase db;
  for (const auto& m : base.models()) db.add(m);
  const CadModel& chair = base.at("chair_000");
  db.add(make_cad_model("chair_000_copy", "chair", chair.mesh));
  CHECK(clone_distance(chair, db.at("chair_000_copy")) == 0.0);
  CHECK(clone_distance(chair, db.at("chair_001")) > 0.02);

  SynthSceneOptions so = small_scene(8, 0);
  so.cad_ids = {"chair_000", "chair_000", "chair_000", "chair_000", "sofa_000"};
  const SynthScene s = make_synth_scene(db, so);
  AnnotationSet set = s.ground_truth;
  const std::vector<std::string> chairs{set.annotations[0].instance_id, set.annotations[1].instance_id,
                                        set.annotations[2].instance_id, set.annotations[3].instance_id};
  set.annotations[1].cad_id = "chair_000_copy";
  set.annotations[3].cad_id = "chair_000_copy";
  for (auto& a : set.annotations) a.provenance.clear();
  const Annotation sofa_before = set.annotations[4];

  PipelineConfig cfg = quick_config();
  const double before = cluster_sum(set, s.scene, db, chairs);
  cluster_and_clone(set, s.scene, db, cfg);
  const double after = cluster_sum(set, s.scene, db, chairs);
  CHECK(after <= before + 1e-12);
  for (int i = 1; i < 4; ++i) CHECK(set.annotations[i].cad_id == set.annotations[0].cad_id);
  CHECK(set.annotations[4].cad_id == sofa_before.cad_id);
  CHECK(set.annotations[4].provenance.empty());
  int clone_events = 0;
  for (int i = 0; i < 4; ++i) {
    for (const auto& e : set.annotations[i].provenance) clone_events += e.kind == EventKind::clone;
  }
  CHECK(clone_events == 2);

  const std::string once = to_json(set);
  cluster_and_clone(set, s.scene, db, cfg);
  CHECK(to_json(set) == once);
}

TEST_CASE("very different models stay in singleton clusters") {
  SynthDatabaseOptions dbo;
  dbo.classes = {"chair"};
  dbo.models_per_class = 2;
  const CadDatabase db = make_synth_database(dbo);
  SynthSceneOptions so = small_scene(9, 0);
  so.cad_ids = {"chair_000", "chair_001"};
  const SynthScene s = make_synth_scene(db, so);
  AnnotationSet set = s.ground_truth;
  const std::string before = to_json(set);
  cluster_and_clone(set, s.scene, db, quick_config());
  CHECK(to_json(set) == before);
}

TEST_CASE("tree directory loading") {
  SynthDatabaseOptions dbo;
  dbo.classes = {"chair", "table"};
  dbo.models_per_class = 2;
  dbo.samples = 500;
  const CadDatabase db = make_synth_database(dbo);
  const auto dir = std::filesystem::temp_directory_path() / "cadfit_pipeline_trees";
  std::filesystem::create_directories(dir);
  for (const auto& [label, tree] : trees_for(db)) save_tree(tree, dir / ("t_" + label + ".json"));
  const TreeSet loaded = load_trees(dir);
  CHECK(loaded.size() == 2);
  CHECK(loaded.count("chair") == 1);
  std::filesystem::remove_all(dir);
}
