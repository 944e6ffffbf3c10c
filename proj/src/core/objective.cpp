#include "cadfit/objective.hpp"

#include <cmath>

#include "cadfit/error.hpp"

namespace cadfit {

void RcWeights::validate() const {
  for (double w : {depth, silhouette, chamfer}) {
    if (!std::isfinite(w) || w < 0.0) throw Error(ErrorCode::invalid_argument, "objective weights must be >= 0");
  }
  if (depth == 0.0 && silhouette == 0.0 && chamfer == 0.0) {
    throw Error(ErrorCode::invalid_argument, "at least one objective weight must be positive");
  }
}

namespace {

void require_same_size(const RenderOutput& a, const RenderOutput& b) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw Error(ErrorCode::invalid_argument, "render resolutions differ",
                std::to_string(a.width()) + "x" + std::to_string(a.height()) + " vs " + std::to_string(b.width()) +
                    "x" + std::to_string(b.height()));
  }
}

struct DepthComparison {
  double depth_l1 = 0.0;
  double iou = 1.0;
};

// Fused depth_l1 / silhouette IoU over two equally sized depth grids.
// Pixels outside `rect` must be invalid in both grids.
DepthComparison compare_depth(const DepthImage& target, const DepthImage& candidate, const PixelRect& rect,
                              double penalty) {
  double sum = 0.0;
  std::size_t inter = 0, uni = 0;
  for (int y = rect.y0; y <= rect.y1; ++y) {
    const double* t = &target.values[static_cast<std::size_t>(y) * target.width];
    const double* c = &candidate.values[static_cast<std::size_t>(y) * candidate.width];
    for (int x = rect.x0; x <= rect.x1; ++x) {
      const bool tv = t[x] > 0.0;
      const bool cv = c[x] > 0.0;
      if (tv && cv) {
        sum += std::abs(t[x] - c[x]);
        ++inter;
        ++uni;
      } else if (tv || cv) {
        sum += penalty;
        ++uni;
      }
    }
  }
  DepthComparison out;
  if (uni > 0) {
    out.depth_l1 = sum / static_cast<double>(uni);
    out.iou = static_cast<double>(inter) / static_cast<double>(uni);
  }
  return out;
}

}  // namespace

double depth_l1(const RenderOutput& target, const RenderOutput& candidate, double mismatch_penalty) {
  require_same_size(target, candidate);
  double sum = 0.0;
  std::size_t support = 0;
  const auto& t = target.depth.values;
  const auto& c = candidate.depth.values;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const bool tv = t[i] > 0.0;
    const bool cv = c[i] > 0.0;
    if (tv && cv) {
      sum += std::abs(t[i] - c[i]);
      ++support;
    } else if (tv || cv) {
      sum += mismatch_penalty;
      ++support;
    }
  }
  return support == 0 ? 0.0 : sum / static_cast<double>(support);
}

double silhouette_iou(const RenderOutput& target, const RenderOutput& candidate) {
  require_same_size(target, candidate);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < target.silhouette.size(); ++i) {
    const bool a = target.silhouette[i] != 0;
    const bool b = candidate.silhouette[i] != 0;
    inter += (a && b) ? 1 : 0;
    uni += (a || b) ? 1 : 0;
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

double silhouette_term(const RenderOutput& target, const RenderOutput& candidate) {
  return 1.0 - silhouette_iou(target, candidate);
}

Observation::Observation(std::vector<TargetView> views, PointCloud points, std::size_t max_points)
    : views_(std::move(views)) {
  if (max_points > 0 && points.size() > max_points) {
    const double stride = static_cast<double>(points.size()) / static_cast<double>(max_points);
    for (std::size_t i = 0; i < max_points; ++i) {
      points_.points.push_back(points.points[static_cast<std::size_t>(i * stride)]);
    }
  } else {
    points_ = std::move(points);
  }
  index_ = KdTree(points_.points);
  for (const auto& v : views_) {
    active_.push_back(v.observed.coverage() > 0);
    rects_.push_back(PixelRect::of(v.observed.depth));
  }
}

Observation Observation::from_scene_object(const SceneObject& object, std::size_t max_points) {
  auto renders = render_target_views(object);
  std::vector<TargetView> views;
  views.reserve(renders.size());
  for (std::size_t i = 0; i < renders.size(); ++i) {
    CameraView camera = object.views[i];
    camera.depth.reset();
    views.push_back({std::move(camera), std::move(renders[i])});
  }
  return Observation(std::move(views), object.points, max_points);
}

std::size_t Observation::active_views() const {
  std::size_t n = 0;
  for (bool a : active_) n += a ? 1 : 0;
  return n;
}

bool Observation::observable() const { return active_views() > 0 || !points_.empty(); }

RcScore rc_score(const Observation& observation, const CadModel& cad, const Pose9D& pose, const RcWeights& weights,
                 const ObjectiveOptions& options) {
  RcScore score;
  const TriMesh posed = apply_pose(cad.mesh, pose);
  thread_local DepthImage candidate;
  for (std::size_t v = 0; v < observation.views().size(); ++v) {
    if (!observation.view_active(v)) continue;
    const auto& view = observation.views()[v];
    PixelRect covered;
    rasterize_depth(posed, view.camera, candidate, &covered);
    if (candidate.width != view.observed.width() || candidate.height != view.observed.height()) {
      throw Error(ErrorCode::invalid_argument, "target view resolution differs from its camera");
    }
    const auto c = compare_depth(view.observed.depth, candidate, covered.united(observation.target_rect(v)),
                                 options.mismatch_penalty);
    score.dpt_term += c.depth_l1;
    score.sil_term += 1.0 - c.iou;
    ++score.views_used;
  }
  if (score.views_used > 0) {
    score.dpt_term /= score.views_used;
    score.sil_term /= score.views_used;
  }

  const auto& scan = observation.points();
  if (!scan.empty()) {
    const Mat3 r = pose.rotation_matrix();
    const Mat3 rt = r.transpose();
    if (options.cd_direction != ChamferDirection::b_to_a) {
      // Distances are evaluated in the rotated-translated model frame against
      // the scaled canonical samples, so the cached index serves every pose.
      double sum = 0.0;
      for (const auto& p : scan.points) {
        sum += cad.index.nearest_scaled(rt * (p - pose.translation), pose.scale).squared_distance;
      }
      score.cd_term += sum / static_cast<double>(scan.size());
    }
    if (options.cd_direction != ChamferDirection::a_to_b) {
      double sum = 0.0;
      for (const auto& s : cad.samples.points) {
        sum += observation.points_index().nearest(r * pose.scale.cwiseProduct(s) + pose.translation).squared_distance;
      }
      score.cd_term += sum / static_cast<double>(cad.samples.size());
    }
  }
  score.total = weights.depth * score.dpt_term + weights.silhouette * score.sil_term + weights.chamfer * score.cd_term;
  return score;
}

RcScore rc_score(std::span<const TargetView> target_views, const CadModel& cad, const Pose9D& pose,
                 const PointCloud& scan_points, const RcWeights& weights, const ObjectiveOptions& options) {
  if (scan_points.empty()) throw Error(ErrorCode::invalid_argument, "scan points must be non-empty");
  if (target_views.empty()) throw Error(ErrorCode::invalid_argument, "at least one target view required");
  const Observation obs({target_views.begin(), target_views.end()}, scan_points, 0);
  return rc_score(obs, cad, pose, weights, options);
}

}  // namespace cadfit
