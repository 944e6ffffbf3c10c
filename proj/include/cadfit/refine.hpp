#pragma once

#include <array>
#include <chrono>
#include <optional>
#include <string>
#include <vector>

#include "cadfit/objective.hpp"

namespace cadfit {

// Per-parameter-group finite-difference steps: translation (m), rotation
// (rad, axis-angle components), log-scale.
struct FdEpsilons {
  double translation = 0.005;
  double rotation = 0.5 * 3.14159265358979323846 / 180.0;
  double log_scale = 0.005;
};

struct RefineConfig {
  int steps = 300;
  double lr_translation = 0.01;
  double lr_rotation = 3.14159265358979323846 / 180.0;
  double lr_log_scale = 0.01;
  FdEpsilons fd;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  // Stop early (keeping the best pose so far) once this instant has passed.
  std::optional<std::chrono::steady_clock::time_point> deadline;

  void validate() const;
};

struct RefineStep {
  int step = 0;
  RcScore score;
  Pose9D pose;
};

struct RefineResult {
  Pose9D pose;  // best pose visited
  RcScore score;
  RcScore initial_score;
  std::vector<RefineStep> history;  // entry 0 is the initial pose
  int steps_completed = 0;
  bool timed_out = false;
};

// Optimization coordinates: translation, axis-angle rotation, log scale.
using PoseParams = std::array<double, 9>;
PoseParams pose_to_params(const Pose9D& pose);
Pose9D params_to_pose(const PoseParams& params);

// Central differences (f(p + e) - f(p - e)) / 2e of rc_score.total with
// respect to the nine pose parameters. Throws Error(numeric) naming the
// parameter whose probe is not finite.
PoseParams fd_gradient(const CadModel& cad, const Pose9D& pose, const Observation& observation,
                       const RcWeights& weights, const FdEpsilons& eps, const ObjectiveOptions& options = {});

// Adam descent on rc_score with finite-difference gradients. Returns the
// best-scoring pose visited, never worse than `init`.
RefineResult refine(const CadModel& cad, const Pose9D& init, const Observation& observation, const RcWeights& weights,
                    const RefineConfig& config, const ObjectiveOptions& options = {});

// "step,total,dpt,sil,cd" rows.
std::string refine_history_csv(const RefineResult& result);

}  // namespace cadfit
