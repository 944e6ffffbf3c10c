#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "cadfit/error.hpp"
#include "cadfit/mcts.hpp"
#include "cadfit/objective.hpp"
#include "cadfit/render.hpp"
#include "cadfit/review.hpp"

namespace cadfit {

using json = nlohmann::json;

void ReviewConfig::validate() const {
  weights.validate();
  refine.validate();
  if (refine_timeout.count() <= 0) throw Error(ErrorCode::invalid_argument, "refine timeout must be positive");
  if (max_points == 0) throw Error(ErrorCode::invalid_argument, "max_points must be positive");
}

std::string_view to_string(MutationKind k) {
  switch (k) {
    case MutationKind::rotate: return "rotate";
    case MutationKind::swap: return "swap";
    case MutationKind::refine: return "refine";
    case MutationKind::status: return "status";
  }
  return "?";
}

namespace {

MutationKind mutation_kind_from_string(std::string_view text) {
  for (auto k : {MutationKind::rotate, MutationKind::swap, MutationKind::refine, MutationKind::status}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::parse_error, "unknown mutation kind", std::string(text));
}

}  // namespace

std::string JournalEntry::to_json() const {
  json j;
  j["seq"] = sequence;
  j["op"] = std::string(cadfit::to_string(kind));
  j["instance_id"] = instance_id;
  switch (kind) {
    case MutationKind::rotate: j["degrees"] = degrees; break;
    case MutationKind::swap:
      j["cad_id"] = cad_id;
      j["override_class"] = override_class;
      break;
    case MutationKind::refine: j["refine_steps"] = refine_steps; break;
    case MutationKind::status: j["status"] = std::string(cadfit::to_string(status)); break;
  }
  j["revision_after"] = revision_after;
  return j.dump();
}

JournalEntry JournalEntry::from_json(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, "malformed journal entry", "offset " + std::to_string(e.byte));
  }
  try {
    JournalEntry e;
    e.sequence = j.at("seq").get<std::uint64_t>();
    e.kind = mutation_kind_from_string(j.at("op").get<std::string>());
    e.instance_id = j.at("instance_id").get<std::string>();
    e.degrees = j.value("degrees", 0);
    e.cad_id = j.value("cad_id", std::string());
    e.override_class = j.value("override_class", false);
    e.refine_steps = j.value("refine_steps", 0);
    if (e.kind == MutationKind::status) e.status = status_from_string(j.at("status").get<std::string>());
    e.revision_after = j.at("revision_after").get<int>();
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::parse_error, "malformed journal entry", ex.what());
  }
}

namespace {

struct Context {
  const Scene& scene;
  const CadDatabase& database;
  const ReviewConfig& config;
};

const SceneObject& object_of(const Scene& scene, const std::string& instance_id) {
  for (const auto& o : scene.objects) {
    if (o.instance_id == instance_id) return o;
  }
  throw Error(ErrorCode::not_found, "no scene object for annotation", instance_id);
}

void require_editable(const Annotation& a) {
  if (a.status == Status::removed) throw Error(ErrorCode::invalid_state, "annotation removed", a.instance_id);
}

Observation observation_of(const Context& ctx, const std::string& instance_id) {
  Observation obs = Observation::from_scene_object(object_of(ctx.scene, instance_id), ctx.config.max_points);
  if (!obs.observable()) throw Error(ErrorCode::unobservable, "object unobservable", instance_id);
  return obs;
}

void mark_edited(Annotation& a, EventKind kind, std::string detail) {
  a.status = Status::edited;
  ++a.revision;
  a.provenance.push_back({kind, std::move(detail), a.score.total});
}

// The apply_* functions are shared by live mutations and journal replay.

void apply_rotate(Annotation& a, int degrees, const Context& ctx) {
  if (degrees != 90 && degrees != 180 && degrees != 270) {
    throw Error(ErrorCode::invalid_argument, "rotation must be 90, 180 or 270 degrees", std::to_string(degrees));
  }
  require_editable(a);
  const Observation obs = observation_of(ctx, a.instance_id);
  a.pose = compose_pose_offset(a.pose, degrees * std::numbers::pi / 180.0);
  a.score = rc_score(obs, ctx.database.at(a.cad_id), a.pose, ctx.config.weights);
  mark_edited(a, EventKind::manual_rotate, "degrees=" + std::to_string(degrees));
}

// Returns false for a swap to the current model (journaled, store unchanged).
bool apply_swap(Annotation& a, const std::string& cad_id, bool override_class, const Context& ctx) {
  require_editable(a);
  const CadModelPtr model = ctx.database.find(cad_id);
  if (!model) throw Error(ErrorCode::not_found, "unknown cad model", cad_id);
  if (model->class_label != a.class_label && !override_class) {
    throw Error(ErrorCode::invalid_argument, "cross-class swap requires override_class",
                a.class_label + " -> " + model->class_label);
  }
  if (cad_id == a.cad_id) return false;
  const Observation obs = observation_of(ctx, a.instance_id);
  a.cad_id = cad_id;
  a.cad_class = model->class_label;
  a.score = rc_score(obs, *model, a.pose, ctx.config.weights);
  a.symmetry = classify_annotation(a, ctx.database, ctx.config.symmetry);
  mark_edited(a, EventKind::manual_swap, "cad_id=" + cad_id);
  return true;
}

struct RefineOutcome {
  int steps = 0;
  bool timed_out = false;
};

// steps < 0: run the configured budget under the configured timeout.
RefineOutcome apply_refine(Annotation& a, int steps, const Context& ctx) {
  require_editable(a);
  const Observation obs = observation_of(ctx, a.instance_id);
  const CadModel& cad = ctx.database.at(a.cad_id);
  RefineOutcome out;
  if (steps == 0) {
    a.pose.rotation = canonical_axis_angle(a.pose.rotation);
    a.score = rc_score(obs, cad, a.pose, ctx.config.weights);
  } else {
    RefineConfig cfg = ctx.config.refine;
    if (steps > 0) {
      cfg.steps = steps;
      cfg.deadline.reset();
    } else {
      cfg.deadline = std::chrono::steady_clock::now() + ctx.config.refine_timeout;
    }
    const RefineResult r = cadfit::refine(cad, a.pose, obs, ctx.config.weights, cfg);
    a.pose = r.pose;
    a.score = r.score;
    out.steps = r.steps_completed;
    out.timed_out = r.timed_out;
  }
  a.symmetry = classify_annotation(a, ctx.database, ctx.config.symmetry);
  // No timeout marker: replay of a timed-out run must produce the same bytes.
  mark_edited(a, EventKind::refine, "steps=" + std::to_string(out.steps));
  return out;
}

void apply_status(Annotation& a, Status to) {
  if (to != Status::verified && to != Status::removed) {
    throw Error(ErrorCode::invalid_argument, "status must be verified or removed", std::string(to_string(to)));
  }
  if (!status_transition_allowed(a.status, to)) {
    throw Error(ErrorCode::invalid_state, "illegal status transition",
                std::string(to_string(a.status)) + " -> " + std::string(to_string(to)));
  }
  const std::string detail = std::string(to_string(a.status)) + "->" + std::string(to_string(to));
  a.status = to;
  ++a.revision;
  a.provenance.push_back({EventKind::status, detail, a.score.total});
}

void check_revision(const Annotation& a, std::optional<int> expected) {
  if (expected && *expected != a.revision) {
    throw Error(ErrorCode::conflict, "stale revision",
                "expected " + std::to_string(*expected) + ", current " + std::to_string(a.revision));
  }
}

}  // namespace

ReviewSession::ReviewSession(Scene scene, AnnotationSet initial, std::shared_ptr<const CadDatabase> database,
                             ReviewConfig config)
    : scene_(std::move(scene)), initial_(std::move(initial)), database_(std::move(database)),
      config_(std::move(config)) {
  if (!database_) throw Error(ErrorCode::invalid_argument, "review session needs a database");
  config_.validate();
  scene_.validate();
  if (initial_.scene_id.empty()) initial_.scene_id = scene_.scene_id;
  if (initial_.scene_id != scene_.scene_id) {
    throw Error(ErrorCode::invalid_argument, "annotations belong to another scene",
                initial_.scene_id + " vs " + scene_.scene_id);
  }
  store_ = initial_;
}

std::vector<AnnotationSummary> ReviewSession::list() const {
  std::shared_lock lock(store_mutex_);
  std::vector<AnnotationSummary> out;
  for (const auto& a : store_.annotations) {
    std::size_t views = 0;
    for (const auto& o : scene_.objects) {
      if (o.instance_id == a.instance_id) views = o.views.size();
    }
    out.push_back({a.instance_id, a.class_label, a.cad_id, a.score.total, a.status, a.revision, views});
  }
  return out;
}

Annotation ReviewSession::current(const std::string& instance_id) const {
  std::shared_lock lock(store_mutex_);
  const Annotation* a = store_.find(instance_id);
  if (!a) throw Error(ErrorCode::not_found, "unknown annotation", instance_id);
  return *a;
}

Annotation ReviewSession::get(const std::string& instance_id) const { return current(instance_id); }

AnnotationSet ReviewSession::snapshot() const {
  std::shared_lock lock(store_mutex_);
  return store_;
}

AnnotationSet ReviewSession::export_set() const {
  AnnotationSet out = snapshot();
  std::erase_if(out.annotations, [](const Annotation& a) { return a.status == Status::removed; });
  return out;
}

std::vector<JournalEntry> ReviewSession::journal() const {
  std::shared_lock lock(store_mutex_);
  return journal_;
}

MutationResult ReviewSession::commit(Applied applied) {
  std::unique_lock lock(store_mutex_);
  applied.entry.sequence = journal_.size() + 1;
  applied.entry.revision_after = applied.annotation.revision;
  *store_.find(applied.annotation.instance_id) = applied.annotation;
  journal_.push_back(applied.entry);
  if (config_.journal_file) {
    std::ofstream f(*config_.journal_file, std::ios::app);
    if (!f) throw Error(ErrorCode::io_error, "cannot append to journal", config_.journal_file->string());
    f << applied.entry.to_json() << '\n';
  }
  return {std::move(applied.annotation), applied.timed_out};
}

MutationResult ReviewSession::rotate(const std::string& instance_id, int degrees, std::optional<int> expected_revision) {
  std::lock_guard writer(write_mutex_);
  Applied ap{current(instance_id), {}, false};
  check_revision(ap.annotation, expected_revision);
  apply_rotate(ap.annotation, degrees, {scene_, *database_, config_});
  ap.entry.kind = MutationKind::rotate;
  ap.entry.instance_id = instance_id;
  ap.entry.degrees = degrees;
  return commit(std::move(ap));
}

MutationResult ReviewSession::swap(const std::string& instance_id, const std::string& cad_id, bool override_class,
                                   std::optional<int> expected_revision) {
  std::lock_guard writer(write_mutex_);
  Applied ap{current(instance_id), {}, false};
  check_revision(ap.annotation, expected_revision);
  apply_swap(ap.annotation, cad_id, override_class, {scene_, *database_, config_});
  ap.entry.kind = MutationKind::swap;
  ap.entry.instance_id = instance_id;
  ap.entry.cad_id = cad_id;
  ap.entry.override_class = override_class;
  return commit(std::move(ap));
}

MutationResult ReviewSession::refine(const std::string& instance_id, std::optional<int> expected_revision) {
  std::lock_guard writer(write_mutex_);
  Applied ap{current(instance_id), {}, false};
  check_revision(ap.annotation, expected_revision);
  const RefineOutcome r = apply_refine(ap.annotation, -1, {scene_, *database_, config_});
  ap.entry.kind = MutationKind::refine;
  ap.entry.instance_id = instance_id;
  ap.entry.refine_steps = r.steps;
  ap.timed_out = r.timed_out;
  return commit(std::move(ap));
}

MutationResult ReviewSession::set_status(const std::string& instance_id, Status status,
                                         std::optional<int> expected_revision) {
  std::lock_guard writer(write_mutex_);
  Applied ap{current(instance_id), {}, false};
  check_revision(ap.annotation, expected_revision);
  apply_status(ap.annotation, status);
  ap.entry.kind = MutationKind::status;
  ap.entry.instance_id = instance_id;
  ap.entry.status = status;
  return commit(std::move(ap));
}

AnnotationSet ReviewSession::replay(const AnnotationSet& initial, const std::vector<JournalEntry>& journal,
                                    const Scene& scene, const CadDatabase& database, const ReviewConfig& config) {
  AnnotationSet store = initial;
  const Context ctx{scene, database, config};
  for (const auto& e : journal) {
    Annotation* a = store.find(e.instance_id);
    if (!a) throw Error(ErrorCode::invalid_state, "journal names an unknown annotation", e.instance_id);
    switch (e.kind) {
      case MutationKind::rotate: apply_rotate(*a, e.degrees, ctx); break;
      case MutationKind::swap: apply_swap(*a, e.cad_id, e.override_class, ctx); break;
      case MutationKind::refine: apply_refine(*a, e.refine_steps, ctx); break;
      case MutationKind::status: apply_status(*a, e.status); break;
    }
    if (a->revision != e.revision_after) {
      throw Error(ErrorCode::invalid_state, "journal replay diverged", "entry " + std::to_string(e.sequence));
    }
  }
  return store;
}

Overlay ReviewSession::overlay(const std::string& instance_id, std::size_t view, bool raw) const {
  const Annotation a = current(instance_id);
  const SceneObject& object = object_of(scene_, instance_id);
  if (view >= object.views.size()) {
    throw Error(ErrorCode::invalid_argument, "view out of range",
                std::to_string(view) + " of " + std::to_string(object.views.size()));
  }
  const OverlayKey key{instance_id, view, a.revision, raw};
  {
    std::lock_guard lock(cache_mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) {
      Overlay hit = it->second;
      hit.cached = true;
      return hit;
    }
  }

  const RenderOutput target = render_target_views(object)[view];
  const RenderOutput candidate = rasterize(apply_pose(database_->at(a.cad_id).mesh, a.pose), object.views[view]);
  const int w = target.width(), h = target.height();

  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto* img : {&target.depth, &candidate.depth}) {
    for (double d : img->values) {
      if (d > 0.0) {
        lo = std::min(lo, d);
        hi = std::max(hi, d);
      }
    }
  }
  auto shade = [&](double d) -> std::uint16_t {
    if (!(d > 0.0)) return 0;
    if (raw) return static_cast<std::uint16_t>(std::min(65535.0, std::round(d * 1000.0)));
    const double f = hi > lo ? (d - lo) / (hi - lo) : 0.0;
    return static_cast<std::uint16_t>(std::lround(255.0 - 200.0 * f));  // near is bright
  };

  std::vector<std::uint16_t> pixels(static_cast<std::size_t>(3 * w) * h, 0);
  std::size_t diff = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      const std::size_t row = static_cast<std::size_t>(y) * 3 * w;
      pixels[row + x] = shade(target.depth.values[i]);
      pixels[row + w + x] = shade(candidate.depth.values[i]);
      if (target.silhouette[i] != candidate.silhouette[i]) {
        pixels[row + 2 * w + x] = raw ? 65535 : 255;
        ++diff;
      }
    }
  }

  Overlay out;
  out.png = encode_png_gray(3 * w, h, raw ? 16 : 8, pixels);
  out.width = w;
  out.height = h;
  out.iou = silhouette_iou(target, candidate);
  const std::size_t area = target.coverage();
  out.difference_density = area ? static_cast<double>(diff) / area : (diff ? 1.0 : 0.0);
  out.revision = a.revision;
  {
    std::lock_guard lock(cache_mutex_);
    cache_.emplace(key, out);
  }
  return out;
}

std::string annotation_wire_id(const std::string& scene_id, const std::string& instance_id) {
  return scene_id + ":" + instance_id;
}

std::pair<std::string, std::string> split_wire_id(const std::string& id) {
  const auto pos = id.find(':');
  if (pos == std::string::npos || pos == 0 || pos + 1 == id.size()) {
    throw Error(ErrorCode::invalid_argument, "annotation id must be <scene>:<instance>", id);
  }
  return {id.substr(0, pos), id.substr(pos + 1)};
}

ReviewSession& ReviewService::add_scene(Scene scene, AnnotationSet annotations, ReviewConfig config) {
  const std::string id = scene.scene_id;
  if (id.empty() || id.find(':') != std::string::npos || id.find('/') != std::string::npos) {
    throw Error(ErrorCode::invalid_argument, "scene id must be non-empty without ':' or '/'", id);
  }
  if (sessions_.count(id)) throw Error(ErrorCode::invalid_argument, "duplicate scene", id);
  auto session = std::make_unique<ReviewSession>(std::move(scene), std::move(annotations), database_, std::move(config));
  return *sessions_.emplace(id, std::move(session)).first->second;
}

std::vector<std::string> ReviewService::scene_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, s] : sessions_) ids.push_back(id);
  return ids;
}

ReviewSession& ReviewService::session(const std::string& scene_id) {
  auto it = sessions_.find(scene_id);
  if (it == sessions_.end()) throw Error(ErrorCode::not_found, "unknown scene", scene_id);
  return *it->second;
}

const ReviewSession& ReviewService::session(const std::string& scene_id) const {
  return const_cast<ReviewService*>(this)->session(scene_id);
}

}  // namespace cadfit
