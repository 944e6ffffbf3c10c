#include "cadfit/refine.hpp"

#include <cmath>
#include <cstdio>

#include "cadfit/error.hpp"

namespace cadfit {

namespace {

constexpr const char* kParamNames[9] = {"tx", "ty", "tz", "rx", "ry", "rz", "log_sx", "log_sy", "log_sz"};

double group_value(int i, double t, double r, double s) { return i < 3 ? t : (i < 6 ? r : s); }

}  // namespace

void RefineConfig::validate() const {
  if (steps < 1) throw Error(ErrorCode::invalid_argument, "refine steps must be >= 1");
  if (!(fd.translation > 0.0) || !(fd.rotation > 0.0) || !(fd.log_scale > 0.0)) {
    throw Error(ErrorCode::invalid_argument, "finite-difference epsilons must be positive");
  }
  if (lr_translation < 0.0 || lr_rotation < 0.0 || lr_log_scale < 0.0) {
    throw Error(ErrorCode::invalid_argument, "learning rates must be >= 0");
  }
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0) {
    throw Error(ErrorCode::invalid_argument, "Adam betas must lie in [0, 1)");
  }
}

PoseParams pose_to_params(const Pose9D& pose) {
  return {pose.translation.x(), pose.translation.y(), pose.translation.z(),
          pose.rotation.x(),    pose.rotation.y(),    pose.rotation.z(),
          std::log(pose.scale.x()), std::log(pose.scale.y()), std::log(pose.scale.z())};
}

Pose9D params_to_pose(const PoseParams& p) {
  Pose9D pose;
  pose.translation = Vec3(p[0], p[1], p[2]);
  pose.rotation = Vec3(p[3], p[4], p[5]);
  pose.scale = Vec3(std::exp(p[6]), std::exp(p[7]), std::exp(p[8]));
  return pose;
}

PoseParams fd_gradient(const CadModel& cad, const Pose9D& pose, const Observation& observation,
                       const RcWeights& weights, const FdEpsilons& eps, const ObjectiveOptions& options) {
  const PoseParams base = pose_to_params(pose);
  PoseParams grad{};
  for (int i = 0; i < 9; ++i) {
    const double e = group_value(i, eps.translation, eps.rotation, eps.log_scale);
    PoseParams plus = base, minus = base;
    plus[i] += e;
    minus[i] -= e;
    const double fp = rc_score(observation, cad, params_to_pose(plus), weights, options).total;
    const double fm = rc_score(observation, cad, params_to_pose(minus), weights, options).total;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw Error(ErrorCode::numeric, "objective not finite at finite-difference probe", kParamNames[i]);
    }
    grad[i] = (fp - fm) / (2.0 * e);
  }
  return grad;
}

RefineResult refine(const CadModel& cad, const Pose9D& init, const Observation& observation, const RcWeights& weights,
                    const RefineConfig& config, const ObjectiveOptions& options) {
  config.validate();
  init.validate();
  RefineResult result;
  result.initial_score = rc_score(observation, cad, init, weights, options);
  if (!std::isfinite(result.initial_score.total)) {
    throw Error(ErrorCode::numeric, "objective not finite at the initial pose");
  }
  result.pose = init;
  result.score = result.initial_score;
  result.history.push_back({0, result.initial_score, init});

  PoseParams theta = pose_to_params(init);
  PoseParams m{}, v{};
  double b1t = 1.0, b2t = 1.0;
  for (int step = 1; step <= config.steps; ++step) {
    if (config.deadline && std::chrono::steady_clock::now() >= *config.deadline) {
      result.timed_out = true;
      break;
    }
    const PoseParams g = fd_gradient(cad, params_to_pose(theta), observation, weights, config.fd, options);
    b1t *= config.adam_beta1;
    b2t *= config.adam_beta2;
    for (int i = 0; i < 9; ++i) {
      m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * g[i];
      v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * g[i] * g[i];
      const double mhat = m[i] / (1.0 - b1t);
      const double vhat = v[i] / (1.0 - b2t);
      const double lr = group_value(i, config.lr_translation, config.lr_rotation, config.lr_log_scale);
      theta[i] -= lr * mhat / (std::sqrt(vhat) + config.adam_eps);
    }
    const Pose9D pose = params_to_pose(theta);
    const RcScore score = rc_score(observation, cad, pose, weights, options);
    result.history.push_back({step, score, pose});
    result.steps_completed = step;
    if (score.total < result.score.total) {
      result.score = score;
      result.pose = pose;
    }
  }
  result.pose.rotation = canonical_axis_angle(result.pose.rotation);
  return result;
}

std::string refine_history_csv(const RefineResult& result) {
  std::string out = "step,total,dpt,sil,cd\n";
  char buf[160];
  for (const auto& h : result.history) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", h.step, h.score.total, h.score.dpt_term,
                  h.score.sil_term, h.score.cd_term);
    out += buf;
  }
  return out;
}

}  // namespace cadfit
