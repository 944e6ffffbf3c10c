#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cadfit/cad_model.hpp"
#include "cadfit/hoc_tree.hpp"
#include "cadfit/objective.hpp"
#include "cadfit/refine.hpp"

namespace cadfit {

struct SearchConfig {
  int max_iterations = 1200;
  double exploration_c = 1.4142135623730951;
  // A candidate is refined when its raw score < ratio * incumbent.
  double refine_trigger_ratio = 1.1;
  // Budget of each in-search refinement; 0 disables refinement.
  int refine_steps = 50;
  // Learning rates and epsilons for in-search refinement (steps ignored).
  RefineConfig refine;
  std::uint64_t seed = 0;
  // Never descend into subtrees whose leaves have all been evaluated.
  bool skip_exhausted = false;
  ObjectiveOptions objective;

  void validate() const;
};

struct TraceEntry {
  int iteration = 0;
  std::vector<int> path;  // node ids, root first
  std::string cad_id;
  int pose_bin = 0;
  double raw_score = 0.0;
  bool cached = false;  // leaf already evaluated in an earlier iteration
  bool refined = false;
  double refined_score = 0.0;     // meaningful when refined
  double incumbent_before = 0.0;  // +inf before the first evaluation
  double incumbent_after = 0.0;
};

struct SearchResult {
  std::string cad_id;
  int pose_bin = 0;
  Pose9D pose;
  RcScore score;
  int iterations_run = 0;
  int refinements_run = 0;
  int evaluations = 0;  // distinct candidates scored
  std::vector<TraceEntry> trace;
};

// init_pose composed with an up-axis rotation of the canonical model. Scale x
// and y swap when the turn is closer to an odd quarter turn, so the model keeps
// filling the same box.
Pose9D compose_pose_offset(const Pose9D& init, double radians);

// MCTS over the tree's (pose bin, model) leaves with UCB1 selection, uniform
// random rollouts and triggered refinement. Throws Error(unobservable,
// "object unobservable") when no candidate can be scored.
SearchResult search(const HocTree& tree, const CadDatabase& database, const Observation& observation,
                    const Pose9D& init_pose, const RcWeights& weights, const SearchConfig& config = {});

inline constexpr std::size_t kExhaustiveLeafLimit = 4096;

// Scores every leaf, refines the `top_k` best raw candidates with
// config.refine_steps and returns the overall minimum.
SearchResult exhaustive_search(const HocTree& tree, const CadDatabase& database, const Observation& observation,
                               const Pose9D& init_pose, const RcWeights& weights, const SearchConfig& config = {},
                               int top_k = 8);

enum class TraceLevel {
  all,      // every iteration
  changes,  // iterations that refined or moved the incumbent
};

// One JSON object per line; instance_id is added to each line when not empty.
std::string trace_jsonl(const SearchResult& result, TraceLevel level = TraceLevel::all,
                        const std::string& instance_id = "");

}  // namespace cadfit
