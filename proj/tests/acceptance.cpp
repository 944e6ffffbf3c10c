// Acceptance suite: one PASS/FAIL line per criterion. Run with criterion
// numbers as arguments to select a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cadfit/error.hpp"
#include "cadfit/eval.hpp"
#include "cadfit/metrics.hpp"
#include "cadfit/mcts.hpp"
#include "cadfit/pipeline.hpp"
#include "cadfit/refine.hpp"
#include "cadfit/review.hpp"
#include "cadfit/synth.hpp"
#include "oracles.hpp"
#include "review_fixture.hpp"

using namespace cadfit;

namespace {

// Pinned tolerances and budgets.
constexpr int kWidth = 192, kHeight = 144;

constexpr int kC1Trials = 50;
constexpr int kC1SmallModels = 8;
constexpr int kC1LargeModels = 64;
constexpr int kC1LargeIterations = 300;
constexpr double kC1LargeGap = 0.05;
constexpr int kC1LargeRequired = 45;
constexpr double kC1MaxSeconds = 600.0;

constexpr int kC2Scenes = 10;
constexpr double kC2Required = 0.80;

constexpr int kC3Trials = 100;
constexpr int kC3Required = 90;
constexpr int kC3Steps = 300;

constexpr int kC4Trials = 200;
constexpr double kC4Tol = 1e-12;

constexpr int kC5Trials = 50;
constexpr double kC5Rel = 0.02;

constexpr int kC6Trials = 50;
constexpr double kC6Rel = 1e-3;
constexpr double kC6MinNorm = 1e-6;
constexpr double kC6Step = 1e-8;  // translation central-difference step, meters

constexpr int kC7Trials = 100;
constexpr double kC7Tol = 1e-12;

constexpr int kC10Trials = 50;
constexpr double kC10Required = 0.60;

constexpr int kC13Sequences = 5;
constexpr int kC13Mutations = 100;

struct Outcome {
  bool pass = false;
  std::string summary;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

SynthSceneOptions scene_options(std::uint64_t seed, int objects, int width = kWidth, int height = kHeight) {
  SynthSceneOptions so;
  so.objects = objects;
  so.width = width;
  so.height = height;
  so.seed = seed;
  return so;
}

CadDatabase single_class_db(const std::string& label, int models, std::uint64_t seed = 1) {
  SynthDatabaseOptions dbo;
  dbo.classes = {label};
  dbo.models_per_class = models;
  dbo.seed = seed;
  return make_synth_database(dbo);
}

// ---------------------------------------------------------------------------

Outcome c1_oracle_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  SearchConfig cfg;
  cfg.refine_steps = 0;
  cfg.skip_exhausted = true;

  const CadDatabase small = single_class_db("chair", kC1SmallModels);
  const HocTree small_tree = build_tree(small.models(), "chair");
  int exact = 0;
  for (int t = 0; t < kC1Trials; ++t) {
    const SynthScene s = make_synth_scene(small, scene_options(1000 + t, 1));
    const SceneObject& obj = s.scene.objects[0];
    const Observation obs = Observation::from_scene_object(obj);
    const Pose9D init = init_pose(obj);
    cfg.max_iterations = static_cast<int>(small_tree.leaf_count()) * 4;
    cfg.seed = t;
    const SearchResult m = search(small_tree, small, obs, init, {}, cfg);
    const SearchResult e = exhaustive_search(small_tree, small, obs, init, {}, cfg);
    exact += m.score.total == e.score.total && m.cad_id == e.cad_id && m.pose_bin == e.pose_bin;
  }

  const CadDatabase large = single_class_db("chair", kC1LargeModels, 2);
  const HocTree large_tree = build_tree(large.models(), "chair");
  int close = 0;
  cfg.max_iterations = kC1LargeIterations;
  for (int t = 0; t < kC1Trials; ++t) {
    const SynthScene s = make_synth_scene(large, scene_options(2000 + t, 1));
    const SceneObject& obj = s.scene.objects[0];
    const Observation obs = Observation::from_scene_object(obj);
    const Pose9D init = init_pose(obj);
    cfg.seed = t;
    const SearchResult m = search(large_tree, large, obs, init, {}, cfg);
    const SearchResult e = exhaustive_search(large_tree, large, obs, init, {}, cfg);
    close += m.score.total <= (1.0 + kC1LargeGap) * e.score.total;
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return {exact == kC1Trials && close >= kC1LargeRequired && secs < kC1MaxSeconds && large_tree.leaf_count() == 256,
          fmt("%zu leaves exact %d/%d; %zu leaves within %.0f%% %d/%d (need %d); %.0f s", small_tree.leaf_count(), exact,
              kC1Trials, large_tree.leaf_count(), kC1LargeGap * 100, close, kC1Trials, kC1LargeRequired, secs)};
}

// Ground truth, or a model sharing the gt leaf's parent cluster.
bool retrieved_or_sibling(const HocTree& tree, const std::string& gt_id, const std::string& pred_id) {
  if (gt_id == pred_id) return true;
  for (int leaf : tree.leaves()) {
    const HocNode& n = tree.node(leaf);
    if (n.pose_bin != 0 || n.model_id != gt_id) continue;
    if (tree.node(n.parent).kind != NodeKind::cluster) return false;
    const auto m = tree.members(n.parent);
    return std::find(m.begin(), m.end(), pred_id) != m.end();
  }
  return false;
}

Outcome c2_synthetic_recovery() {
  SynthDatabaseOptions dbo;
  dbo.models_per_class = 4;
  const CadDatabase db = make_synth_database(dbo);
  TreeSet trees;
  for (const auto& c : db.classes()) trees.emplace(c, build_tree(db.models(), c));
  int total = 0, retrieved = 0, aligned = 0;
  for (int s = 0; s < kC2Scenes; ++s) {
    const SynthScene scene = make_synth_scene(db, scene_options(100 + s, 6));
    PipelineConfig cfg;
    cfg.seed = s;
    const AnnotationSet out = annotate_scene(scene.scene, db, trees, cfg);
    for (const auto& g : scene.ground_truth.annotations) {
      ++total;
      const Annotation* p = out.find(g.instance_id);
      if (!p) continue;
      retrieved += retrieved_or_sibling(trees.at(g.class_label), g.cad_id, p->cad_id);
      aligned += alignment_correct(*p, g).correct;
    }
  }
  return {retrieved >= kC2Required * total && aligned >= kC2Required * total,
          fmt("%d scenes, %d objects (24 models): retrieved %d (%.1f%%), aligned %d (%.1f%%), need %.0f%%", kC2Scenes,
              total, retrieved, 100.0 * retrieved / total, aligned, 100.0 * aligned / total, kC2Required * 100)};
}

Outcome c3_refinement_recovery() {
  std::mt19937_64 rng(33);
  std::normal_distribution<double> n(0.0, 1.0);
  std::bernoulli_distribution coin(0.5);
  const auto& classes = synth_classes();
  SynthDatabaseOptions dbo;
  dbo.models_per_class = 1;
  const CadDatabase db = make_synth_database(dbo);
  int within = 0, never_worse = 0;
  for (int t = 0; t < kC3Trials; ++t) {
    SynthSceneOptions so = scene_options(3000 + t, 1);
    so.classes = {classes[static_cast<std::size_t>(t) % classes.size()]};
    const SynthScene s = make_synth_scene(db, so);
    const Annotation& gt = s.ground_truth.annotations[0];
    const Observation obs = Observation::from_scene_object(s.scene.objects[0]);
    Pose9D start = gt.pose;
    start.translation += Vec3(n(rng), n(rng), n(rng)).normalized() * 0.10;
    start.rotation = matrix_to_axis_angle(
        axis_angle_to_matrix(Vec3(n(rng), n(rng), n(rng)).normalized() * (10.0 * M_PI / 180.0)) * start.rotation_matrix());
    for (int k = 0; k < 3; ++k) start.scale[k] *= coin(rng) ? 1.10 : 0.90;
    RefineConfig cfg;
    cfg.steps = kC3Steps;
    const RefineResult r = refine(db.at(gt.cad_id), start, obs, {}, cfg);
    never_worse += r.score.total <= r.initial_score.total;
    Annotation pred = gt;
    pred.pose = r.pose;
    within += alignment_correct(pred, gt).correct;
  }
  return {within >= kC3Required && never_worse == kC3Trials,
          fmt("within thresholds %d/%d (need %d); score never worse %d/%d", within, kC3Trials, kC3Required, never_worse,
              kC3Trials)};
}

Outcome c4_chamfer_oracle() {
  std::mt19937_64 rng(44);
  std::uniform_int_distribution<std::size_t> size(1, 400);
  double worst = 0.0;
  int ok = 0;
  for (int t = 0; t < kC4Trials; ++t) {
    const PointCloud a = oracle::random_cloud(rng, size(rng)), b = oracle::random_cloud(rng, size(rng), 2.0);
    const double got = chamfer(a, b, ChamferDirection::symmetric).value;
    const double want = oracle::symmetric(a.points, b.points);
    const double d = std::abs(got - want);
    worst = std::max(worst, d);
    ok += d < kC4Tol;
  }
  return {ok == kC4Trials, fmt("%d/%d instances, max |diff| %.3g (tol %.0e)", ok, kC4Trials, worst, kC4Tol)};
}

Outcome c5_emd() {
  std::mt19937_64 rng(55);
  std::uniform_int_distribution<std::size_t> size(16, 256);
  int ok = 0;
  double worst = 0.0;
  for (int t = 0; t < kC5Trials; ++t) {
    const std::size_t n = t == 0 ? 256 : size(rng);
    const PointCloud a = oracle::random_cloud(rng, n), b = oracle::random_cloud(rng, n);
    const double exact = oracle::min_cost_matching(oracle::distance_matrix(a, b), n) / static_cast<double>(n);
    const double approx = emd(a, b, EmdMode::approximate).value;
    const double rel = std::abs(approx - exact) / exact;
    worst = std::max(worst, rel);
    ok += rel <= kC5Rel;
  }
  return {ok == kC5Trials, fmt("%d/%d instances, max relative gap %.3g (tol %.0f%%)", ok, kC5Trials, worst, kC5Rel * 100)};
}

Outcome c6_gradient() {
  std::mt19937_64 rng(66);
  std::normal_distribution<double> jitter(0.0, 0.05);
  SynthDatabaseOptions dbo;
  dbo.models_per_class = 1;
  dbo.samples = 2000;
  const CadDatabase db = make_synth_database(dbo);
  const auto& classes = synth_classes();
  int checked = 0, ok = 0;
  double worst = 0.0;
  FdEpsilons eps;
  eps.translation = kC6Step;
  for (int t = 0; t < kC6Trials; ++t) {
    SynthSceneOptions so = scene_options(6000 + t, 1, 64, 48);
    so.classes = {classes[static_cast<std::size_t>(t) % classes.size()]};
    const SynthScene s = make_synth_scene(db, so);
    const Annotation& gt = s.ground_truth.annotations[0];
    const Observation obs = Observation::from_scene_object(s.scene.objects[0], 500);
    Pose9D pose = gt.pose;
    pose.translation += Vec3(jitter(rng), jitter(rng), jitter(rng));
    const CadModel& cad = db.at(gt.cad_id);
    const PoseParams g = fd_gradient(cad, pose, obs, {0, 0, 1}, eps);
    const Vec3 analytic = oracle::chamfer_translation_gradient(obs.points().points, cad.samples.points, pose);
    if (analytic.norm() <= kC6MinNorm) continue;
    ++checked;
    const double rel = (Vec3(g[0], g[1], g[2]) - analytic).norm() / analytic.norm();
    worst = std::max(worst, rel);
    ok += rel < kC6Rel;
  }
  return {checked > 0 && ok == checked,
          fmt("%d/%d configurations with |g| > %.0e agree, max relative error %.3g (tol %.0e)", ok, checked, kC6MinNorm,
              worst, kC6Rel)};
}

Outcome c7_objective_invariants() {
  SynthDatabaseOptions dbo;
  dbo.models_per_class = 2;
  dbo.samples = 2000;
  const CadDatabase db = make_synth_database(dbo);
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> w(0.0, 3.0), j(-0.15, 0.15);
  int ok = 0;
  double worst = 0.0;
  for (int t = 0; t < kC7Trials; ++t) {
    const SynthScene s = make_synth_scene(db, scene_options(7000 + t, 1, 96, 72));
    const Annotation& gt = s.ground_truth.annotations[0];
    const Observation obs = Observation::from_scene_object(s.scene.objects[0], 1000);
    Pose9D pose = gt.pose;
    pose.translation += Vec3(j(rng), j(rng), 0.0);
    const CadModel& cad = *db.models()[static_cast<std::size_t>(t) % db.size()];
    const RcWeights weights{w(rng), w(rng), w(rng)};
    const RcScore sc = rc_score(obs, cad, pose, weights);
    const double k = w(rng) + 0.5;
    const RcScore scaled = rc_score(obs, cad, pose, {k * weights.depth, k * weights.silhouette, k * weights.chamfer});
    const double errs[] = {
        std::abs(sc.total - (weights.depth * sc.dpt_term + weights.silhouette * sc.sil_term + weights.chamfer * sc.cd_term)),
        std::abs(scaled.total - k * sc.total),
        std::abs(rc_score(obs, cad, pose, {1, 0, 0}).total - sc.dpt_term),
        std::abs(rc_score(obs, cad, pose, {0, 1, 0}).total - sc.sil_term),
        std::abs(rc_score(obs, cad, pose, {0, 0, 1}).total - sc.cd_term),
        std::abs(rc_score(obs, cad, pose, {weights.depth, 0, weights.chamfer}).total -
                 (weights.depth * sc.dpt_term + weights.chamfer * sc.cd_term))};
    const double e = *std::max_element(std::begin(errs), std::end(errs));
    worst = std::max(worst, e);
    ok += e <= kC7Tol;
  }
  return {ok == kC7Trials, fmt("%d/%d evaluations, max deviation %.3g (tol %.0e)", ok, kC7Trials, worst, kC7Tol)};
}

// Independent classification: unit-diagonal centring, brute-force chamfers.
Symmetry oracle_symmetry(const TriMesh& mesh, const SymmetryOptions& opt, std::vector<double>* values) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  for (const auto& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  TriMesh base = mesh;
  for (auto& v : base.vertices) v = (v - 0.5 * (lo + hi)) / (hi - lo).norm();
  const auto ref = sample_surface(base, opt.samples, opt.seed).points;
  std::vector<std::vector<Vec3>> others;
  for (int k = 1; k < 8; ++k) others.push_back(sample_surface(base, opt.samples, opt.seed + k).points);
  *values = oracle::rotation_chamfers(ref, others);
  const auto& cd = *values;
  auto below = [&](int k) { return cd[static_cast<std::size_t>(k - 1)] < opt.threshold; };
  if (below(1) && below(2) && below(3) && below(4) && below(5) && below(6) && below(7)) return Symmetry::infinite;
  if (below(2) && below(4) && below(6)) return Symmetry::four_fold;
  if (below(4)) return Symmetry::two_fold;
  return Symmetry::none;
}

Outcome c8_symmetry() {
  const SymmetryOptions opt;  // 5000 samples, 0.05, 45-degree steps
  struct Shape {
    const char* name;
    TriMesh mesh;
    Symmetry expected;
  };
  const std::vector<Shape> shapes{
      {"square box", make_box({-0.5, -0.5, 0}, {0.5, 0.5, 0.4}), Symmetry::four_fold},
      {"rectangular box", make_box({-0.8, -0.4, 0}, {0.8, 0.4, 0.6}), Symmetry::two_fold},
      {"cylinder", make_cylinder({0, 0, 0}, 0.4, 1.0, 64), Symmetry::infinite},
      {"L-bracket", make_l_bracket(1.0, 0.6, 0.8, 0.1), Symmetry::none},
  };
  int ok = 0;
  std::string detail;
  for (const auto& s : shapes) {
    std::vector<double> want;
    const Symmetry o = oracle_symmetry(s.mesh, opt, &want);
    const Symmetry got = classify_symmetry(s.mesh, opt);
    const auto values = symmetry_chamfers(s.mesh, opt);
    double diff = 0.0;
    for (std::size_t k = 0; k < 7; ++k) diff = std::max(diff, std::abs(values[k] - want[k]));
    const bool good = got == s.expected && o == s.expected && diff < 1e-9;
    ok += good;
    detail += fmt("%s%s=%s", detail.empty() ? "" : ", ", s.name, std::string(to_string(got)).c_str());
  }
  return {ok == static_cast<int>(shapes.size()), fmt("%d/4 match expected and oracle (%s)", ok, detail.c_str())};
}

Outcome c9_cloning() {
  SynthDatabaseOptions dbo;
  dbo.classes = {"chair", "sofa"};
  dbo.models_per_class = 3;
  const CadDatabase base = make_synth_database(dbo);
  CadDatabase db;
  for (const auto& m : base.models()) db.add(m);
  // Same shape under two more ids.
  db.add(make_cad_model("chair_000_b", "chair", base.at("chair_000").mesh));
  db.add(make_cad_model("chair_000_c", "chair", base.at("chair_000").mesh));
  TreeSet trees;
  for (const auto& c : db.classes()) trees.emplace(c, build_tree(db.models(), c));
  SynthSceneOptions so = scene_options(909, 0);
  so.cad_ids = {"chair_000", "chair_000", "chair_000", "chair_000", "sofa_001"};
  const SynthScene s = make_synth_scene(db, so);

  PipelineConfig cfg;
  cfg.search.max_iterations = 300;
  cfg.final_refine_steps = 100;
  cfg.seed = 9;
  PipelineConfig no_clone = cfg;
  no_clone.clone.enabled = false;
  const AnnotationSet before = annotate_scene(s.scene, db, trees, no_clone);
  AnnotationSet after = annotate_scene(s.scene, db, trees, cfg);

  std::set<std::string> chair_ids;
  double sum_before = 0.0, sum_after = 0.0;
  bool sofa_untouched = false;
  std::set<std::string> before_ids;
  for (std::size_t i = 0; i < s.ground_truth.annotations.size(); ++i) {
    const std::string& id = s.ground_truth.annotations[i].instance_id;
    const Annotation* a = after.find(id);
    const Annotation* b = before.find(id);
    if (!a || !b) return {false, "missing annotation " + id};
    if (a->class_label == "chair") {
      chair_ids.insert(a->cad_id);
      before_ids.insert(b->cad_id);
      sum_before += b->score.total;
      sum_after += a->score.total;
    } else {
      sofa_untouched = annotation_to_json(*a) == annotation_to_json(*b);
    }
  }
  const std::string once = to_json(after);
  cluster_and_clone(after, s.scene, db, cfg);
  const bool idempotent = to_json(after) == once;
  const bool pass = chair_ids.size() == 1 && sofa_untouched && sum_after <= sum_before + 1e-12 && idempotent;
  return {pass, fmt("chair ids before %zu, after %zu; sofa untouched %s; cluster sum %.5f -> %.5f; idempotent %s",
                    before_ids.size(), chair_ids.size(), sofa_untouched ? "yes" : "no", sum_before, sum_after,
                    idempotent ? "yes" : "no")};
}

Outcome c10_trigger_ratio() {
  const CadDatabase db = single_class_db("chair", 6, 10);
  const HocTree tree = build_tree(db.models(), "chair");
  int more_refinements = 0, not_worse = 0;
  for (int t = 0; t < kC10Trials; ++t) {
    const SynthScene s = make_synth_scene(db, scene_options(10000 + t, 1, 96, 72));
    const SceneObject& obj = s.scene.objects[0];
    const Observation obs = Observation::from_scene_object(obj, 1000);
    const Pose9D init = init_pose(obj);
    SearchConfig cfg;
    cfg.max_iterations = 40;
    cfg.refine_steps = 10;
    cfg.seed = t;
    cfg.refine_trigger_ratio = 1.1;
    const SearchResult loose = search(tree, db, obs, init, {}, cfg);
    cfg.refine_trigger_ratio = 1.0;
    const SearchResult strict = search(tree, db, obs, init, {}, cfg);
    more_refinements += loose.refinements_run >= strict.refinements_run;
    not_worse += loose.score.total <= strict.score.total;
  }
  return {more_refinements == kC10Trials && not_worse >= kC10Required * kC10Trials,
          fmt("refinements(1.1) >= refinements(1.0) on %d/%d; score(1.1) <= score(1.0) on %d/%d (need %.0f%%)",
              more_refinements, kC10Trials, not_worse, kC10Trials, kC10Required * 100)};
}

Outcome c11_latent_loss() {
  const std::vector<double> z{0.4, -1.0, 2.2, 0.0, 3.1};
  const LatentLoss id = latent_loss(z, z);
  std::vector<double> shifted = z;
  for (auto& v : shifted) v += 0.7;
  const LatentLoss sh = latent_loss(shifted, z);
  const LatentLoss defaults = latent_loss(std::vector<double>{0.0, 2.0}, std::vector<double>{1.0, -1.0});
  const LatentLoss explicit_weights = latent_loss(std::vector<double>{0.0, 2.0}, std::vector<double>{1.0, -1.0}, 1.0, 0.5);
  const bool identity = id.total == 0.0 && id.mse == 0.0 && std::abs(id.kl) < 1e-12;
  const bool shift = std::abs(sh.mse - 0.49) < 1e-12 && std::abs(sh.kl) < 1e-12;
  const bool weights = defaults.total == explicit_weights.total &&
                       std::abs(defaults.total - (defaults.mse + 0.5 * defaults.kl)) < 1e-12 && defaults.kl > 0.0;
  return {identity && shift && weights,
          fmt("identity %s; shift 0.7 -> mse %.6f kl %.1e; defaults (1, 0.5) %s", identity ? "ok" : "bad", sh.mse, sh.kl,
              weights ? "ok" : "bad")};
}

Outcome c12_determinism() {
  SynthDatabaseOptions dbo;
  dbo.models_per_class = 3;
  const CadDatabase db = make_synth_database(dbo);
  TreeSet trees;
  for (const auto& c : db.classes()) trees.emplace(c, build_tree(db.models(), c));
  const SynthScene s = make_synth_scene(db, scene_options(1212, 4));
  PipelineConfig cfg;
  cfg.search.max_iterations = 200;
  cfg.final_refine_steps = 60;
  cfg.seed = 12;
  const auto dir = std::filesystem::temp_directory_path() / "cadfit_acceptance_c12";
  std::filesystem::create_directories(dir);
  save_annotations(annotate_scene(s.scene, db, trees, cfg), dir / "a.json");
  save_annotations(annotate_scene(s.scene, db, trees, cfg), dir / "b.json");
  auto read = [](const std::filesystem::path& p) {
    std::ifstream f(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
  };
  const std::string a = read(dir / "a.json"), b = read(dir / "b.json");
  std::filesystem::remove_all(dir);
  return {!a.empty() && a == b, fmt("two runs, %zu bytes each, identical %s", a.size(), a == b ? "yes" : "no")};
}

Outcome c13_review_journal() {
  const ReviewFixture f(4, 10);
  std::mt19937_64 rng(1313);
  std::vector<std::string> ids;
  for (const auto& a : f.initial.annotations) ids.push_back(a.instance_id);
  std::vector<std::string> models;
  for (const auto& m : f.db->models()) models.push_back(m->id);
  int identical = 0, illegal = 0, rejected = 0, legal_ok = 0, legal = 0;
  for (int seq = 0; seq < kC13Sequences; ++seq) {
    ReviewSession s(f.synth.scene, f.initial, f.db, f.config);
    std::map<std::string, Status> status;
    for (const auto& a : f.initial.annotations) status[a.instance_id] = a.status;
    for (int m = 0; m < kC13Mutations; ++m) {
      const std::string& id = ids[rng() % ids.size()];
      const int op = static_cast<int>(rng() % 10);
      try {
        if (op < 3) {
          static const int degrees[] = {90, 180, 270, 45};
          s.rotate(id, degrees[rng() % 4]);
        } else if (op < 5) {
          s.swap(id, models[rng() % models.size()], rng() % 2 == 0);
        } else if (op < 6) {
          s.refine(id);
        } else {
          static const Status targets[] = {Status::verified, Status::removed, Status::edited, Status::auto_};
          const Status to = targets[rng() % 4];
          const Status from = s.get(id).status;
          const bool allowed = (to == Status::verified || to == Status::removed) && from != Status::removed && from != to;
          if (!allowed) ++illegal;
          else ++legal;
          try {
            s.set_status(id, to);
            if (!allowed) continue;  // accepted an illegal transition
            ++legal_ok;
          } catch (const Error&) {
            if (!allowed) ++rejected;
          }
          continue;
        }
      } catch (const Error&) {
        // Rejected edits (removed annotation, bad degrees, cross-class) leave no journal entry.
      }
    }
    const AnnotationSet replayed = ReviewSession::replay(s.initial(), s.journal(), f.synth.scene, *f.db, f.config);
    identical += to_json(replayed) == to_json(s.snapshot());
  }
  return {identical == kC13Sequences && rejected == illegal && legal_ok == legal && illegal > 0,
          fmt("%d/%d sequences of %d mutations replay identically; illegal transitions rejected %d/%d; legal accepted %d/%d",
              identical, kC13Sequences, kC13Mutations, rejected, illegal, legal_ok, legal)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, c1_oracle_equivalence}, {2, c2_synthetic_recovery}, {3, c3_refinement_recovery}, {4, c4_chamfer_oracle},
      {5, c5_emd},                {6, c6_gradient},           {7, c7_objective_invariants}, {8, c8_symmetry},
      {9, c9_cloning},            {10, c10_trigger_ratio},    {11, c11_latent_loss},        {12, c12_determinism},
      {13, c13_review_journal}};
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  int failed = 0;
  for (const auto& [id, run] : criteria) {
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("criterion %2d: %s  %s [%.1f s]\n", id, o.pass ? "PASS" : "FAIL", o.summary.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
