#pragma once

#include <span>
#include <vector>

#include "cadfit/cad_model.hpp"
#include "cadfit/kdtree.hpp"
#include "cadfit/metrics.hpp"
#include "cadfit/render.hpp"
#include "cadfit/scene.hpp"

namespace cadfit {

struct RcWeights {
  double depth = 1.0;
  double silhouette = 1.0;
  double chamfer = 1.0;

  void validate() const;
};

struct RcScore {
  double total = 0.0;
  double dpt_term = 0.0;
  double sil_term = 0.0;
  double cd_term = 0.0;
  int views_used = 0;
};

struct ObjectiveOptions {
  // Depth penalty (meters) for a pixel covered by exactly one of the two renders.
  double mismatch_penalty = 0.5;
  // a_to_b = scan -> CAD (default); b_to_a = CAD -> scan; symmetric = both.
  ChamferDirection cd_direction = ChamferDirection::a_to_b;
};

// Mean |d_t - d_c| over the union of both supports, pixels covered by only
// one render contributing `mismatch_penalty`. 0 for an empty union.
double depth_l1(const RenderOutput& target, const RenderOutput& candidate, double mismatch_penalty = 0.5);

// 1 - IoU of the silhouettes; two empty masks count as IoU 1.
double silhouette_term(const RenderOutput& target, const RenderOutput& candidate);
double silhouette_iou(const RenderOutput& target, const RenderOutput& candidate);

// Precomputed target side of the objective for one scene object.
class Observation {
 public:
  Observation() = default;
  // Scan points beyond `max_points` are thinned with a fixed stride.
  Observation(std::vector<TargetView> views, PointCloud points, std::size_t max_points = 2000);
  static Observation from_scene_object(const SceneObject& object, std::size_t max_points = 2000);

  const std::vector<TargetView>& views() const { return views_; }
  const PointCloud& points() const { return points_; }
  const KdTree& points_index() const { return index_; }
  std::size_t active_views() const;
  bool view_active(std::size_t i) const { return active_[i]; }
  const PixelRect& target_rect(std::size_t i) const { return rects_[i]; }
  // True when at least one view has target pixels or the cloud is non-empty.
  bool observable() const;

 private:
  std::vector<TargetView> views_;
  PointCloud points_;
  KdTree index_;
  std::vector<bool> active_;  // view has target pixels
  std::vector<PixelRect> rects_;
};

RcScore rc_score(const Observation& observation, const CadModel& cad, const Pose9D& pose, const RcWeights& weights,
                 const ObjectiveOptions& options = {});

// Convenience form that builds the observation on the fly.
RcScore rc_score(std::span<const TargetView> target_views, const CadModel& cad, const Pose9D& pose,
                 const PointCloud& scan_points, const RcWeights& weights, const ObjectiveOptions& options = {});

}  // namespace cadfit
