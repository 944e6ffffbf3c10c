#include "cadfit/mcts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <nlohmann/json.hpp>

#include "cadfit/error.hpp"

namespace cadfit {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Candidate {
  bool evaluated = false;
  double raw = 0.0;
  bool refined = false;
  double value = 0.0;  // min(raw, refined)
  Pose9D pose;
  RcScore score;
};

class Evaluator {
 public:
  Evaluator(const HocTree& tree, const CadDatabase& db, const Observation& obs, const Pose9D& init,
            const RcWeights& weights, const SearchConfig& config)
      : tree_(tree), db_(db), obs_(obs), init_(init), weights_(weights), config_(config) {
    refine_config_ = config.refine;
    refine_config_.steps = std::max(1, config.refine_steps);
  }

  // Raw score of a leaf at its bin-composed pose.
  Candidate score_leaf(int leaf) const {
    const auto& node = tree_.node(leaf);
    const auto& bin = tree_.node(tree_.path_from_root(leaf)[1]);
    Candidate c;
    c.evaluated = true;
    c.pose = compose_pose_offset(init_, bin.rotation_offset);
    c.score = rc_score(obs_, db_.at(node.model_id), c.pose, weights_, config_.objective);
    c.raw = c.score.total;
    c.value = c.raw;
    return c;
  }

  void refine_candidate(int leaf, Candidate& c) const {
    const auto r = refine(db_.at(tree_.node(leaf).model_id), c.pose, obs_, weights_, refine_config_, config_.objective);
    c.refined = true;
    if (r.score.total < c.value) {
      c.value = r.score.total;
      c.pose = r.pose;
      c.score = r.score;
    }
  }

 private:
  const HocTree& tree_;
  const CadDatabase& db_;
  const Observation& obs_;
  const Pose9D& init_;
  const RcWeights& weights_;
  const SearchConfig& config_;
  RefineConfig refine_config_;
};

void check_inputs(const HocTree& tree, const Observation& observation, const Pose9D& init_pose) {
  if (tree.size() == 0 || tree.leaf_count() == 0) throw Error(ErrorCode::invalid_argument, "search tree is empty");
  init_pose.validate();
  if (!observation.observable()) throw Error(ErrorCode::unobservable, "object unobservable");
}

void finish(SearchResult& result, const HocTree& tree, int best_leaf, const Candidate& best) {
  if (best_leaf < 0 || !std::isfinite(best.value)) throw Error(ErrorCode::unobservable, "object unobservable");
  const auto& leaf = tree.node(best_leaf);
  result.cad_id = leaf.model_id;
  result.pose_bin = leaf.pose_bin;
  result.pose = best.pose;
  result.pose.rotation = canonical_axis_angle(result.pose.rotation);
  result.score = best.score;
}

}  // namespace

void SearchConfig::validate() const {
  if (max_iterations < 1) throw Error(ErrorCode::invalid_argument, "max_iterations must be >= 1");
  if (!(refine_trigger_ratio >= 1.0)) throw Error(ErrorCode::invalid_argument, "refine_trigger_ratio must be >= 1");
  if (!(exploration_c >= 0.0)) throw Error(ErrorCode::invalid_argument, "exploration_c must be >= 0");
  if (refine_steps < 0) throw Error(ErrorCode::invalid_argument, "refine_steps must be >= 0");
  if (refine_steps > 0) {
    RefineConfig r = refine;
    r.steps = refine_steps;
    r.validate();
  }
}

Pose9D compose_pose_offset(const Pose9D& init, double radians) {
  Pose9D out = init;
  const Mat3 r = init.rotation_matrix() * rotation_about_up(radians);
  out.rotation = matrix_to_axis_angle(r);
  if (std::abs(std::sin(radians)) > std::abs(std::cos(radians))) std::swap(out.scale.x(), out.scale.y());
  return out;
}

SearchResult search(const HocTree& tree, const CadDatabase& database, const Observation& observation,
                    const Pose9D& init_pose, const RcWeights& weights, const SearchConfig& config) {
  config.validate();
  weights.validate();
  check_inputs(tree, observation, init_pose);

  const std::size_t n = tree.size();
  std::vector<int> visits(n, 0);
  std::vector<double> value_sum(n, 0.0);
  std::vector<int> pending(n, 0);  // unevaluated leaves below each node
  std::vector<Candidate> cache(n);
  for (int leaf : tree.leaves()) {
    for (int a : tree.path_from_root(leaf)) ++pending[static_cast<std::size_t>(a)];
  }

  Evaluator eval(tree, database, observation, init_pose, weights, config);
  std::mt19937_64 rng(config.seed);
  auto pick = [&](const std::vector<int>& options) {
    std::uniform_int_distribution<std::size_t> d(0, options.size() - 1);
    return options[d(rng)];
  };

  SearchResult result;
  double incumbent = kInf, worst = -kInf;
  int best_leaf = -1;

  auto eligible = [&](int parent) {
    std::vector<int> out;
    for (int c : tree.node(parent).children) {
      if (!config.skip_exhausted || pending[static_cast<std::size_t>(c)] > 0) out.push_back(c);
    }
    return out;
  };
  auto reward = [&](int id) {
    const double mean = value_sum[static_cast<std::size_t>(id)] / visits[static_cast<std::size_t>(id)];
    if (!(worst > incumbent)) return 1.0;
    return (worst - mean) / (worst - incumbent);
  };

  for (int it = 0; it < config.max_iterations && pending[0] > 0; ++it) {
    std::vector<int> path{0};
    int node = 0;
    // Selection down to the first node with an unvisited child, then a
    // uniform random rollout to a leaf.
    bool rollout = false;
    while (tree.node(node).kind != NodeKind::leaf) {
      const auto options = eligible(node);
      if (rollout) {
        node = pick(options);
      } else {
        std::vector<int> fresh;
        for (int c : options) {
          if (visits[static_cast<std::size_t>(c)] == 0) fresh.push_back(c);
        }
        if (!fresh.empty()) {
          node = pick(fresh);
          rollout = true;
        } else {
          const double log_n = std::log(static_cast<double>(visits[static_cast<std::size_t>(node)]));
          double best_ucb = -kInf;
          int chosen = options.front();
          for (int c : options) {
            const double u =
                reward(c) + config.exploration_c * std::sqrt(log_n / visits[static_cast<std::size_t>(c)]);
            if (u > best_ucb) {
              best_ucb = u;
              chosen = c;
            }
          }
          node = chosen;
        }
      }
      path.push_back(node);
    }

    TraceEntry entry;
    entry.iteration = it;
    entry.path = path;
    entry.cad_id = tree.node(node).model_id;
    entry.pose_bin = tree.node(node).pose_bin;
    entry.incumbent_before = incumbent;
    Candidate& cand = cache[static_cast<std::size_t>(node)];
    if (cand.evaluated) {
      entry.cached = true;
    } else {
      cand = eval.score_leaf(node);
      ++result.evaluations;
      for (int a : path) --pending[static_cast<std::size_t>(a)];
      if (config.refine_steps > 0 && std::isfinite(cand.raw) && cand.raw < config.refine_trigger_ratio * incumbent) {
        eval.refine_candidate(node, cand);
        ++result.refinements_run;
        entry.refined = true;
        entry.refined_score = cand.value;
      }
      if (cand.value < incumbent) {
        incumbent = cand.value;
        best_leaf = node;
      }
      if (std::isfinite(cand.raw)) worst = std::max(worst, cand.raw);
    }
    entry.raw_score = cand.raw;
    entry.incumbent_after = incumbent;
    result.trace.push_back(std::move(entry));
    for (int a : path) {
      ++visits[static_cast<std::size_t>(a)];
      value_sum[static_cast<std::size_t>(a)] += cand.value;
    }
    ++result.iterations_run;
  }

  if (best_leaf >= 0) finish(result, tree, best_leaf, cache[static_cast<std::size_t>(best_leaf)]);
  else throw Error(ErrorCode::unobservable, "object unobservable");
  return result;
}

SearchResult exhaustive_search(const HocTree& tree, const CadDatabase& database, const Observation& observation,
                               const Pose9D& init_pose, const RcWeights& weights, const SearchConfig& config,
                               int top_k) {
  config.validate();
  weights.validate();
  if (top_k < 0) throw Error(ErrorCode::invalid_argument, "top_k must be >= 0");
  if (tree.leaf_count() > kExhaustiveLeafLimit) {
    throw Error(ErrorCode::size_limit, "database too large for exhaustive search",
                std::to_string(tree.leaf_count()) + " leaves > " + std::to_string(kExhaustiveLeafLimit));
  }
  check_inputs(tree, observation, init_pose);

  Evaluator eval(tree, database, observation, init_pose, weights, config);
  SearchResult result;
  const auto leaves = tree.leaves();
  std::vector<Candidate> cands;
  double incumbent = kInf;
  for (int leaf : leaves) {
    TraceEntry entry;
    entry.iteration = static_cast<int>(cands.size());
    entry.path = tree.path_from_root(leaf);
    entry.cad_id = tree.node(leaf).model_id;
    entry.pose_bin = tree.node(leaf).pose_bin;
    entry.incumbent_before = incumbent;
    cands.push_back(eval.score_leaf(leaf));
    entry.raw_score = cands.back().raw;
    incumbent = std::min(incumbent, cands.back().raw);
    entry.incumbent_after = incumbent;
    result.trace.push_back(std::move(entry));
  }
  result.iterations_run = static_cast<int>(leaves.size());
  result.evaluations = result.iterations_run;

  std::vector<std::size_t> order(cands.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return cands[a].raw < cands[b].raw; });
  if (config.refine_steps > 0) {
    const std::size_t k = std::min(order.size(), static_cast<std::size_t>(top_k));
    for (std::size_t i = 0; i < k; ++i) {
      if (!std::isfinite(cands[order[i]].raw)) continue;
      eval.refine_candidate(leaves[order[i]], cands[order[i]]);
      auto& entry = result.trace[order[i]];
      entry.refined = true;
      entry.refined_score = cands[order[i]].value;
      ++result.refinements_run;
    }
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < cands.size(); ++i) {
    if (cands[i].value < cands[best].value) best = i;
  }
  finish(result, tree, leaves[best], cands[best]);
  return result;
}

std::string trace_jsonl(const SearchResult& result, TraceLevel level, const std::string& instance_id) {
  auto num = [](double v) -> nlohmann::json {
    if (std::isfinite(v)) return v;
    return nullptr;
  };
  std::string out;
  for (const auto& e : result.trace) {
    if (level == TraceLevel::changes && !e.refined && e.incumbent_after == e.incumbent_before) continue;
    nlohmann::json j{{"iteration", e.iteration}, {"path", e.path},       {"cad_id", e.cad_id},
                     {"pose_bin", e.pose_bin},   {"raw", num(e.raw_score)}, {"cached", e.cached},
                     {"refined", e.refined},     {"incumbent_before", num(e.incumbent_before)},
                     {"incumbent_after", num(e.incumbent_after)}};
    if (e.refined) j["refined_score"] = num(e.refined_score);
    if (!instance_id.empty()) j["instance_id"] = instance_id;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace cadfit
