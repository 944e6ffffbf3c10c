#include "cadfit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <string>

#include "cadfit/error.hpp"

namespace cadfit {

std::string_view to_string(ChamferDirection d) {
  switch (d) {
    case ChamferDirection::a_to_b: return "a_to_b";
    case ChamferDirection::b_to_a: return "b_to_a";
    case ChamferDirection::symmetric: return "symmetric";
  }
  return "symmetric";
}

std::string_view to_string(EmdMode m) {
  return m == EmdMode::exact_assignment ? "exact_assignment" : "approximate";
}

double one_sided_chamfer(std::span<const Vec3> source, const KdTree& target, ChamferNorm norm) {
  if (source.empty() || target.empty()) {
    throw Error(ErrorCode::invalid_argument, "chamfer distance of an empty point cloud");
  }
  double sum = 0.0;
  for (const auto& p : source) {
    const double d = target.nearest(p).squared_distance;
    sum += norm == ChamferNorm::squared ? d : std::sqrt(d);
  }
  return sum / static_cast<double>(source.size());
}

ChamferResult chamfer(const PointCloud& a, const PointCloud& b, ChamferDirection direction, ChamferNorm norm) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::invalid_argument, "chamfer distance of an empty point cloud");
  ChamferResult result{0.0, direction};
  if (direction != ChamferDirection::b_to_a) {
    const KdTree index(b.points);
    result.value += one_sided_chamfer(a.points, index, norm);
  }
  if (direction != ChamferDirection::a_to_b) {
    const KdTree index(a.points);
    result.value += one_sided_chamfer(b.points, index, norm);
  }
  return result;
}

std::vector<std::size_t> hungarian_assignment(std::span<const double> cost, std::size_t n) {
  // Shortest augmenting path formulation with row/column potentials,
  // 1-based internally; column 0 is the virtual source.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  std::vector<double> minv(n + 1);
  std::vector<char> used(n + 1);
  for (std::size_t row = 1; row <= n; ++row) {
    match[0] = row;
    std::size_t col0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[col0] = 1;
      const std::size_t row0 = match[col0];
      double delta = inf;
      std::size_t col1 = 0;
      for (std::size_t col = 1; col <= n; ++col) {
        if (used[col]) continue;
        const double cur = cost[(row0 - 1) * n + (col - 1)] - u[row0] - v[col];
        if (cur < minv[col]) {
          minv[col] = cur;
          way[col] = col0;
        }
        if (minv[col] < delta) {
          delta = minv[col];
          col1 = col;
        }
      }
      for (std::size_t col = 0; col <= n; ++col) {
        if (used[col]) {
          u[match[col]] += delta;
          v[col] -= delta;
        } else {
          minv[col] -= delta;
        }
      }
      col0 = col1;
    } while (match[col0] != 0);
    do {
      const std::size_t col1 = way[col0];
      match[col0] = match[col1];
      col0 = col1;
    } while (col0 != 0);
  }
  std::vector<std::size_t> assignment(n);
  for (std::size_t col = 1; col <= n; ++col) assignment[match[col] - 1] = col - 1;
  return assignment;
}

std::vector<std::size_t> auction_assignment(std::span<const double> cost, std::size_t n, double* epsilon_final) {
  std::vector<std::size_t> assignment(n, 0);
  if (n == 0) return assignment;
  if (n == 1) {
    if (epsilon_final) *epsilon_final = 0.0;
    return assignment;
  }
  const double max_cost = *std::max_element(cost.begin(), cost.end());
  if (!(max_cost > 0.0)) {
    for (std::size_t i = 0; i < n; ++i) assignment[i] = i;
    if (epsilon_final) *epsilon_final = 0.0;
    return assignment;
  }

  constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::vector<double> price(n, 0.0);
  std::vector<std::size_t> owner(n);
  double eps = max_cost / 8.0;
  for (;;) {
    std::fill(owner.begin(), owner.end(), kNone);
    std::deque<std::size_t> unassigned;
    for (std::size_t i = 0; i < n; ++i) unassigned.push_back(i);
    while (!unassigned.empty()) {
      const std::size_t person = unassigned.front();
      unassigned.pop_front();
      const double* row = cost.data() + person * n;
      double best = -std::numeric_limits<double>::infinity();
      double second = best;
      std::size_t best_obj = 0;
      for (std::size_t j = 0; j < n; ++j) {
        const double value = -row[j] - price[j];
        if (value > best) {
          second = best;
          best = value;
          best_obj = j;
        } else if (value > second) {
          second = value;
        }
      }
      price[best_obj] += (best - second) + eps;
      if (owner[best_obj] != kNone) unassigned.push_back(owner[best_obj]);
      owner[best_obj] = person;
      assignment[person] = best_obj;
    }
    if (eps < 1e-6 * max_cost) break;
    eps /= 4.0;
  }
  if (epsilon_final) *epsilon_final = eps;
  return assignment;
}

EmdResult emd(const PointCloud& a, const PointCloud& b, EmdMode mode) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::invalid_argument, "EMD requires equally sized point clouds",
                std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  if (a.empty()) throw Error(ErrorCode::invalid_argument, "EMD of empty point clouds");
  const std::size_t n = a.size();
  if (mode == EmdMode::exact_assignment && n > kExactEmdLimit) {
    throw Error(ErrorCode::size_limit, "exact EMD is limited to 1024 points; use approximate mode",
                std::to_string(n));
  }
  std::vector<double> cost(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = (a.points[i] - b.points[j]).norm();
  }
  EmdResult result;
  result.method = mode;
  if (mode == EmdMode::exact_assignment) {
    result.assignment = hungarian_assignment(cost, n);
  } else {
    result.assignment = auction_assignment(cost, n, &result.epsilon_final);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total += cost[i * n + result.assignment[i]];
  result.value = total / static_cast<double>(n);
  return result;
}

}  // namespace cadfit
