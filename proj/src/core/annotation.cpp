#include "cadfit/annotation.hpp"

#include <numbers>

#include <nlohmann/json.hpp>

#include "cadfit/error.hpp"
#include "cadfit/io.hpp"

namespace cadfit {

using nlohmann::json;

std::string_view to_string(Symmetry s) {
  switch (s) {
    case Symmetry::none: return "none";
    case Symmetry::two_fold: return "two_fold";
    case Symmetry::four_fold: return "four_fold";
    case Symmetry::infinite: return "infinite";
  }
  return "none";
}

std::string_view to_string(Status s) {
  switch (s) {
    case Status::auto_: return "auto";
    case Status::verified: return "verified";
    case Status::edited: return "edited";
    case Status::removed: return "removed";
  }
  return "auto";
}

Symmetry symmetry_from_string(std::string_view text) {
  for (auto s : {Symmetry::none, Symmetry::two_fold, Symmetry::four_fold, Symmetry::infinite}) {
    if (to_string(s) == text) return s;
  }
  throw Error(ErrorCode::invalid_argument, "unknown symmetry '" + std::string(text) + "'");
}

Status status_from_string(std::string_view text) {
  for (auto s : {Status::auto_, Status::verified, Status::edited, Status::removed}) {
    if (to_string(s) == text) return s;
  }
  throw Error(ErrorCode::invalid_argument, "unknown status '" + std::string(text) + "'");
}

std::vector<double> symmetry_rotations(Symmetry s) {
  constexpr double q = std::numbers::pi / 2.0;
  switch (s) {
    case Symmetry::none: return {0.0};
    case Symmetry::two_fold: return {0.0, 2.0 * q};
    case Symmetry::four_fold: return {0.0, q, 2.0 * q, 3.0 * q};
    case Symmetry::infinite: return {};
  }
  return {0.0};
}

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::search: return "search";
    case EventKind::clone: return "clone";
    case EventKind::manual_rotate: return "manual_rotate";
    case EventKind::manual_swap: return "manual_swap";
    case EventKind::refine: return "refine";
    case EventKind::classify: return "classify";
    case EventKind::status: return "status";
  }
  return "search";
}

EventKind event_kind_from_string(std::string_view text) {
  for (auto k : {EventKind::search, EventKind::clone, EventKind::manual_rotate, EventKind::manual_swap,
                 EventKind::refine, EventKind::classify, EventKind::status}) {
    if (to_string(k) == text) return k;
  }
  throw Error(ErrorCode::invalid_argument, "unknown provenance kind '" + std::string(text) + "'");
}

bool is_manual(EventKind k) { return k == EventKind::manual_rotate || k == EventKind::manual_swap; }

bool status_transition_allowed(Status from, Status to) {
  if (from == Status::removed || from == to) return false;
  return to == Status::verified || to == Status::removed;
}

const Annotation* AnnotationSet::find(const std::string& instance_id) const {
  for (const auto& a : annotations) {
    if (a.instance_id == instance_id) return &a;
  }
  return nullptr;
}

Annotation* AnnotationSet::find(const std::string& instance_id) {
  return const_cast<Annotation*>(std::as_const(*this).find(instance_id));
}

namespace {

json vec(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 read_vec(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::parse_error, std::string(what) + " must hold 3 numbers");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json annotation_json(const Annotation& a) {
  json prov = json::array();
  for (const auto& e : a.provenance) prov.push_back({{"kind", to_string(e.kind)}, {"detail", e.detail}, {"score", e.score}});
  return {{"instance_id", a.instance_id},
          {"class", a.class_label},
          {"cad_id", a.cad_id},
          {"cad_class", a.cad_class},
          {"pose", {{"t", vec(a.pose.translation)}, {"r_axis_angle", vec(a.pose.rotation)}, {"s", vec(a.pose.scale)}}},
          {"symmetry", to_string(a.symmetry)},
          {"status", to_string(a.status)},
          {"revision", a.revision},
          {"score_breakdown",
           {{"total", a.score.total},
            {"dpt", a.score.dpt_term},
            {"sil", a.score.sil_term},
            {"cd", a.score.cd_term},
            {"views_used", a.score.views_used}}},
          {"provenance", std::move(prov)}};
}

Annotation annotation_from(const json& j) {
  Annotation a;
  a.instance_id = j.at("instance_id").get<std::string>();
  a.class_label = j.value("class", std::string());
  a.cad_id = j.at("cad_id").get<std::string>();
  a.cad_class = j.value("cad_class", a.class_label);
  const auto& p = j.at("pose");
  a.pose.translation = read_vec(p.at("t"), "pose.t");
  a.pose.rotation = read_vec(p.at("r_axis_angle"), "pose.r_axis_angle");
  a.pose.scale = read_vec(p.at("s"), "pose.s");
  a.pose.validate();
  a.symmetry = symmetry_from_string(j.value("symmetry", std::string("none")));
  a.status = status_from_string(j.value("status", std::string("auto")));
  a.revision = j.value("revision", 0);
  if (j.contains("score_breakdown")) {
    const auto& s = j.at("score_breakdown");
    a.score.total = s.value("total", 0.0);
    a.score.dpt_term = s.value("dpt", 0.0);
    a.score.sil_term = s.value("sil", 0.0);
    a.score.cd_term = s.value("cd", 0.0);
    a.score.views_used = s.value("views_used", 0);
  }
  if (j.contains("provenance")) {
    for (const auto& e : j.at("provenance")) {
      a.provenance.push_back({event_kind_from_string(e.at("kind").get<std::string>()),
                              e.value("detail", std::string()), e.value("score", 0.0)});
    }
  }
  return a;
}

}  // namespace

std::string to_json(const AnnotationSet& set) {
  json anns = json::array();
  for (const auto& a : set.annotations) anns.push_back(annotation_json(a));
  json failures = json::array();
  for (const auto& f : set.failures) {
    failures.push_back({{"instance_id", f.instance_id}, {"code", f.code}, {"message", f.message}});
  }
  const json doc{{"schema_version", kAnnotationSchemaVersion},
                 {"scene_id", set.scene_id},
                 {"weights",
                  {{"depth", set.weights.depth}, {"silhouette", set.weights.silhouette}, {"chamfer", set.weights.chamfer}}},
                 {"annotations", std::move(anns)},
                 {"failures", std::move(failures)},
                 {"warnings", set.warnings}};
  return doc.dump(2) + "\n";
}

AnnotationSet annotations_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::parse_error, std::string("malformed annotation file: ") + e.what(),
                "offset " + std::to_string(e.byte));
  }
  AnnotationSet set;
  std::size_t index = 0;
  try {
    const int version = doc.at("schema_version").get<int>();
    if (version != kAnnotationSchemaVersion) {
      throw Error(ErrorCode::parse_error, "unsupported annotation schema_version " + std::to_string(version));
    }
    set.scene_id = doc.at("scene_id").get<std::string>();
    if (doc.contains("weights")) {
      const auto& w = doc.at("weights");
      set.weights.depth = w.value("depth", 1.0);
      set.weights.silhouette = w.value("silhouette", 1.0);
      set.weights.chamfer = w.value("chamfer", 1.0);
    }
    for (const auto& a : doc.at("annotations")) {
      set.annotations.push_back(annotation_from(a));
      ++index;
    }
    if (doc.contains("failures")) {
      for (const auto& f : doc.at("failures")) {
        set.failures.push_back({f.at("instance_id").get<std::string>(), f.value("code", std::string()),
                                f.value("message", std::string())});
      }
    }
    if (doc.contains("warnings")) set.warnings = doc.at("warnings").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::parse_error, std::string("bad annotation file: ") + e.what(),
                "annotations[" + std::to_string(index) + "]");
  }
  return set;
}

std::string annotation_to_json(const Annotation& annotation) { return annotation_json(annotation).dump(); }

void save_annotations(const AnnotationSet& set, const std::filesystem::path& file) {
  write_text_file(file, to_json(set));
}

AnnotationSet load_annotations(const std::filesystem::path& file) { return annotations_from_json(read_text_file(file)); }

}  // namespace cadfit
