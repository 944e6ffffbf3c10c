#include "cadfit/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <nlohmann/json.hpp>

#include "cadfit/error.hpp"
#include "cadfit/metrics.hpp"

namespace cadfit {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

Vec3 swap_xy(Vec3 v) {
  std::swap(v.x(), v.y());
  return v;
}

double angle_from_trace(double trace) { return std::acos(std::clamp((trace - 1.0) / 2.0, -1.0, 1.0)); }

std::vector<double> log_softmax(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double v : z) sum += std::exp(v - m);
  const double lse = std::log(sum);
  std::vector<double> out;
  out.reserve(z.size());
  for (double v : z) out.push_back(v - m - lse);
  return out;
}

}  // namespace

void AlignmentThresholds::validate() const {
  if (!(translation_max > 0.0) || !(rotation_max_deg > 0.0) || !(scale_ratio_max > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "alignment thresholds must be positive");
  }
}

double symmetric_rotation_error(const Pose9D& pred, const Pose9D& gt, Symmetry symmetry, Vec3* gt_scale_used) {
  const Mat3 rp = pred.rotation_matrix();
  const Mat3 rg = gt.rotation_matrix();
  if (symmetry == Symmetry::infinite) {
    const Mat3 m = rp.transpose() * rg;
    const double best_trace = std::hypot(m(0, 0) + m(1, 1), m(0, 1) - m(1, 0)) + m(2, 2);
    if (gt_scale_used) {
      // Any azimuth fits; keep whichever axis pairing matches best.
      const Vec3 plain = gt.scale, swapped = swap_xy(gt.scale);
      *gt_scale_used = scale_error(pred.scale, plain) <= scale_error(pred.scale, swapped) ? plain : swapped;
    }
    return angle_from_trace(best_trace);
  }
  double best = std::numeric_limits<double>::infinity();
  for (double g : symmetry_rotations(symmetry)) {
    const double err = rotation_angle_between(rp, rg * rotation_about_up(g));
    if (err < best) {
      best = err;
      if (gt_scale_used) *gt_scale_used = std::abs(std::sin(g)) > std::abs(std::cos(g)) ? swap_xy(gt.scale) : gt.scale;
    }
  }
  return best;
}

double scale_error(const Vec3& pred, const Vec3& gt, ScaleErrorMode mode) {
  const Vec3 ratio = pred.cwiseQuotient(gt);
  if (mode == ScaleErrorMode::mean_ratio) return std::abs(ratio.mean() - 1.0);
  return (ratio.array() - 1.0).abs().maxCoeff();
}

AlignmentCheck alignment_correct(const Annotation& pred, const Annotation& gt, const AlignmentThresholds& thresholds) {
  thresholds.validate();
  if (pred.instance_id != gt.instance_id) {
    throw Error(ErrorCode::invalid_argument, "instance mismatch", pred.instance_id + " vs " + gt.instance_id);
  }
  pred.pose.validate();
  gt.pose.validate();
  AlignmentCheck c;
  c.class_match = pred.class_label == gt.class_label;
  c.translation_error = (pred.pose.translation - gt.pose.translation).norm();
  Vec3 gt_scale = gt.pose.scale;
  c.rotation_error_deg = symmetric_rotation_error(pred.pose, gt.pose, gt.symmetry, &gt_scale) * kRadToDeg;
  c.scale_error = scale_error(pred.pose.scale, gt_scale, thresholds.scale_mode);
  c.translation_ok = c.translation_error <= thresholds.translation_max;
  c.rotation_ok = c.rotation_error_deg <= thresholds.rotation_max_deg;
  c.scale_ok = c.scale_error <= thresholds.scale_ratio_max;
  c.correct = c.class_match && c.translation_ok && c.rotation_ok && c.scale_ok;
  return c;
}

bool retrieval_aware_correct(const Annotation& pred, const Annotation& gt, const AlignmentThresholds& thresholds) {
  return alignment_correct(pred, gt, thresholds).correct && pred.cad_class == gt.cad_class;
}

CompletionReport completion_report(std::span<const PointCloud> pred, std::span<const PointCloud> gt) {
  if (pred.size() != gt.size()) {
    throw Error(ErrorCode::invalid_argument, "pairing mismatch",
                std::to_string(pred.size()) + " predictions vs " + std::to_string(gt.size()) + " references");
  }
  CompletionReport r;
  r.pairs = pred.size();
  if (pred.empty()) return r;
  double cd = 0.0, em = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].size() != gt[i].size()) {
      throw Error(ErrorCode::invalid_argument, "pairing mismatch", "pair " + std::to_string(i) + " differs in size");
    }
    cd += chamfer(pred[i], gt[i], ChamferDirection::symmetric).value;
    const auto mode = pred[i].size() <= kExactEmdLimit ? EmdMode::exact_assignment : EmdMode::approximate;
    em += emd(pred[i], gt[i], mode).value;
  }
  r.cd_x1e4 = cd / static_cast<double>(pred.size()) * 1e4;
  r.emd_x1e2 = em / static_cast<double>(pred.size()) * 1e2;
  return r;
}

LatentLoss latent_loss(std::span<const double> z_p, std::span<const double> z_c, double lambda_mse, double lambda_kl) {
  if (z_p.size() != z_c.size()) {
    throw Error(ErrorCode::invalid_argument, "latent dimension mismatch",
                std::to_string(z_p.size()) + " vs " + std::to_string(z_c.size()));
  }
  if (z_p.empty()) throw Error(ErrorCode::invalid_argument, "empty latent vectors");
  for (std::size_t i = 0; i < z_p.size(); ++i) {
    if (!std::isfinite(z_p[i]) || !std::isfinite(z_c[i])) {
      throw Error(ErrorCode::invalid_argument, "latent vectors must be finite");
    }
  }
  LatentLoss out;
  for (std::size_t i = 0; i < z_p.size(); ++i) out.mse += (z_p[i] - z_c[i]) * (z_p[i] - z_c[i]);
  out.mse /= static_cast<double>(z_p.size());
  const auto lc = log_softmax(z_c), lp = log_softmax(z_p);
  for (std::size_t i = 0; i < lc.size(); ++i) out.kl += std::exp(lc[i]) * (lc[i] - lp[i]);
  out.kl = std::max(0.0, out.kl);
  out.total = lambda_mse * out.mse + lambda_kl * out.kl;
  return out;
}

EvalReport evaluate(const AnnotationSet& pred, const AnnotationSet& gt, const AlignmentThresholds& thresholds,
                    const CadDatabase* database, std::size_t shape_samples) {
  thresholds.validate();
  EvalReport report;
  std::vector<PointCloud> shape_pred, shape_gt;
  for (const auto& g : gt.annotations) {
    InstanceResult r;
    r.instance_id = g.instance_id;
    r.class_label = g.class_label;
    const Annotation* p = pred.find(g.instance_id);
    if (p && p->status != Status::removed) {
      r.predicted = true;
      r.check = alignment_correct(*p, g, thresholds);
      r.retrieval_correct = r.check.correct && p->cad_class == g.cad_class;
      if (database && database->contains(p->cad_id) && database->contains(g.cad_id)) {
        auto posed = [&](const Annotation& a) {
          const auto& s = database->at(a.cad_id).samples.points;
          PointCloud pc;
          const std::size_t k = std::min(shape_samples, s.size());
          pc.points.assign(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(k));
          return apply_pose(pc, a.pose);
        };
        shape_pred.push_back(posed(*p));
        shape_gt.push_back(posed(g));
        const auto one = completion_report(std::span(&shape_pred.back(), 1), std::span(&shape_gt.back(), 1));
        r.cd_x1e4 = one.cd_x1e4;
        r.emd_x1e2 = one.emd_x1e2;
      }
    }
    auto& cls = report.classes[g.class_label];
    ++cls.count;
    if (r.check.correct) ++cls.correct;
    if (r.retrieval_correct) ++cls.retrieval_correct;
    report.instances.push_back(std::move(r));
  }
  for (const auto& p : pred.annotations) {
    if (p.status != Status::removed && !gt.find(p.instance_id)) ++report.unmatched_predictions;
  }
  std::size_t correct = 0, retrieval = 0;
  for (const auto& r : report.instances) {
    correct += r.check.correct ? 1 : 0;
    retrieval += r.retrieval_correct ? 1 : 0;
  }
  if (!report.instances.empty()) {
    report.instance_accuracy = static_cast<double>(correct) / report.instances.size();
    report.instance_retrieval_accuracy = static_cast<double>(retrieval) / report.instances.size();
  }
  if (!report.classes.empty()) {
    for (const auto& [_, c] : report.classes) {
      report.class_accuracy += c.accuracy();
      report.class_retrieval_accuracy += c.retrieval_accuracy();
    }
    report.class_accuracy /= static_cast<double>(report.classes.size());
    report.class_retrieval_accuracy /= static_cast<double>(report.classes.size());
  }
  if (!shape_pred.empty()) {
    double cd = 0.0, em = 0.0;
    for (const auto& r : report.instances) {
      if (r.cd_x1e4) {
        cd += *r.cd_x1e4;
        em += *r.emd_x1e2;
      }
    }
    CompletionReport s;
    s.pairs = shape_pred.size();
    s.cd_x1e4 = cd / s.pairs;
    s.emd_x1e2 = em / s.pairs;
    report.shape = s;
  }
  return report;
}

std::string EvalReport::to_json() const {
  using nlohmann::json;
  json inst = json::array();
  for (const auto& r : instances) {
    json j{{"instance_id", r.instance_id},
           {"class", r.class_label},
           {"predicted", r.predicted},
           {"alignment_correct", r.check.correct},
           {"retrieval_aware_correct", r.retrieval_correct}};
    if (r.predicted) {
      j["errors"] = {{"translation_m", r.check.translation_error},
                     {"rotation_deg", r.check.rotation_error_deg},
                     {"scale", r.check.scale_error},
                     {"class_match", r.check.class_match}};
    }
    if (r.cd_x1e4) {
      j["cd_x1e4"] = *r.cd_x1e4;
      j["emd_x1e2"] = *r.emd_x1e2;
    }
    inst.push_back(std::move(j));
  }
  json cls = json::object();
  for (const auto& [label, c] : classes) {
    cls[label] = {{"count", c.count},
                  {"alignment_accuracy", c.accuracy()},
                  {"retrieval_aware_accuracy", c.retrieval_accuracy()}};
  }
  json doc{{"per_instance",
            {{"alignment_accuracy", instance_accuracy}, {"retrieval_aware_accuracy", instance_retrieval_accuracy}}},
           {"per_class", {{"alignment_accuracy", class_accuracy}, {"retrieval_aware_accuracy", class_retrieval_accuracy}}},
           {"classes", std::move(cls)},
           {"instances", std::move(inst)},
           {"counts", {{"gt", instances.size()}, {"unmatched_predictions", unmatched_predictions}}}};
  if (shape) doc["shape"] = {{"cd_x1e4", shape->cd_x1e4}, {"emd_x1e2", shape->emd_x1e2}, {"pairs", shape->pairs}};
  return doc.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-14s %6s %12s %12s\n", "class", "n", "alignment", "retrieval");
  out += buf;
  for (const auto& [label, c] : classes) {
    std::snprintf(buf, sizeof buf, "%-14s %6zu %11.1f%% %11.1f%%\n", label.c_str(), c.count, 100.0 * c.accuracy(),
                  100.0 * c.retrieval_accuracy());
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "%-14s %6zu %11.1f%% %11.1f%%\n", "per class", classes.size(), 100.0 * class_accuracy,
                100.0 * class_retrieval_accuracy);
  out += buf;
  std::snprintf(buf, sizeof buf, "%-14s %6zu %11.1f%% %11.1f%%\n", "per instance", instances.size(),
                100.0 * instance_accuracy, 100.0 * instance_retrieval_accuracy);
  out += buf;
  if (shape) {
    std::snprintf(buf, sizeof buf, "CD (x1e4) %.4f  EMD (x1e2) %.4f  over %zu pairs\n", shape->cd_x1e4,
                  shape->emd_x1e2, shape->pairs);
    out += buf;
  }
  return out;
}

}  // namespace cadfit
