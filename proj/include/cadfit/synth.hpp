#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cadfit/annotation.hpp"
#include "cadfit/cad_model.hpp"
#include "cadfit/scene.hpp"

namespace cadfit {

// Primitive builders (closed, outward-agnostic triangle soups).
TriMesh make_box(const Vec3& lo, const Vec3& hi);
TriMesh make_cylinder(const Vec3& base_center, double radius, double height, int segments = 32);
// L-shaped bracket: a w x d x t plate with a w x t x h upright at y = d - t.
TriMesh make_l_bracket(double w, double d, double h, double t);

// Procedural furniture: chair, table, cabinet, sofa, bookshelf, display.
const std::vector<std::string>& synth_classes();
// `params` holds values in [0, 1] driving the shape; missing entries read 0.5.
TriMesh make_furniture(const std::string& class_label, const std::vector<double>& params);
// Typical metric size (width x depth x height) of a class, meters.
Vec3 class_nominal_size(const std::string& class_label);

struct SynthDatabaseOptions {
  std::vector<std::string> classes;  // empty: all synth classes
  int models_per_class = 4;
  // Models come in families of this size; family members are small
  // perturbations of one base shape.
  int family_size = 1;
  double family_jitter = 0.04;
  // Family bases of one class are redrawn until their pairwise shape_distance
  // reaches this value (0: off). After `separation_attempts` draws the most
  // distant candidate is kept.
  double min_separation = 0.0;
  int separation_attempts = 100;
  std::uint64_t seed = 1;
  std::size_t samples = kCanonicalSamples;
};

// Ids are "<class>_<nnn>".
CadDatabase make_synth_database(const SynthDatabaseOptions& options);

struct SynthSceneOptions {
  std::string scene_id = "synth";
  int objects = 6;
  int views_per_object = 3;
  int width = 192;
  int height = 144;
  double horizontal_fov_deg = 60.0;
  double camera_distance = 2.5;
  double camera_elevation_deg = 35.0;
  double scale_jitter = 0.15;  // per-axis factor range 1 +- jitter on the nominal size
  double min_gap = 0.6;        // clearance between object footprints, meters
  std::uint64_t seed = 1;
  // Restrict the drawn models to these classes (empty: any).
  std::vector<std::string> classes;
  // Explicit model per object; overrides random choice and `objects`.
  std::vector<std::string> cad_ids;
  bool classify_gt_symmetry = true;
};

struct SynthScene {
  Scene scene;
  AnnotationSet ground_truth;
};

// Objects stand on the floor (z = 0) at random azimuths and scales. Every
// object gets `views_per_object` cameras around it; each view renders the full
// scene and keeps the depth of the object's own pixels, and the object's
// points are the back-projection of those pixels.
SynthScene make_synth_scene(const CadDatabase& database, const SynthSceneOptions& options);

}  // namespace cadfit
