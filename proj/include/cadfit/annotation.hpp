#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cadfit/geometry.hpp"
#include "cadfit/objective.hpp"

namespace cadfit {

enum class Symmetry { none, two_fold, four_fold, infinite };
enum class Status { auto_, verified, edited, removed };

std::string_view to_string(Symmetry s);
std::string_view to_string(Status s);
Symmetry symmetry_from_string(std::string_view text);
Status status_from_string(std::string_view text);

// Rotations about the up-axis (radians) forming the symmetry group. Infinite
// symmetry is reported as an empty list.
std::vector<double> symmetry_rotations(Symmetry s);

enum class EventKind { search, clone, manual_rotate, manual_swap, refine, classify, status };
std::string_view to_string(EventKind k);
EventKind event_kind_from_string(std::string_view text);
bool is_manual(EventKind k);

struct ProvenanceEvent {
  EventKind kind = EventKind::search;
  std::string detail;
  double score = 0.0;  // objective total after the event
};

struct Annotation {
  std::string instance_id;
  std::string class_label;
  std::string cad_id;
  std::string cad_class;
  Pose9D pose;
  RcScore score;
  Symmetry symmetry = Symmetry::none;
  Status status = Status::auto_;
  std::vector<ProvenanceEvent> provenance;
  int revision = 0;
};

// auto/edited/verified -> verified | removed; removed is terminal. A status
// can not transition to itself. `edited` is only entered through manual
// edits, never requested directly.
bool status_transition_allowed(Status from, Status to);

struct AnnotationFailure {
  std::string instance_id;
  std::string code;
  std::string message;
};

struct AnnotationSet {
  std::string scene_id;
  RcWeights weights;
  std::vector<Annotation> annotations;
  std::vector<AnnotationFailure> failures;
  std::vector<std::string> warnings;

  const Annotation* find(const std::string& instance_id) const;
  Annotation* find(const std::string& instance_id);
};

inline constexpr int kAnnotationSchemaVersion = 1;

// Deterministic serialization: identical sets produce identical bytes.
std::string to_json(const AnnotationSet& set);
AnnotationSet annotations_from_json(const std::string& text);
// One annotation as a compact JSON object (the element schema of to_json).
std::string annotation_to_json(const Annotation& annotation);
void save_annotations(const AnnotationSet& set, const std::filesystem::path& file);
AnnotationSet load_annotations(const std::filesystem::path& file);

}  // namespace cadfit
