#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "cadfit/geometry.hpp"
#include "cadfit/kdtree.hpp"

namespace cadfit {

enum class ChamferDirection { a_to_b, b_to_a, symmetric };

// squared: mean of squared nearest-neighbour distances (the default
// convention for every reported CD). euclidean: mean of plain distances.
enum class ChamferNorm { squared, euclidean };

struct ChamferResult {
  double value = 0.0;
  ChamferDirection direction = ChamferDirection::symmetric;
};

ChamferResult chamfer(const PointCloud& a, const PointCloud& b, ChamferDirection direction,
                      ChamferNorm norm = ChamferNorm::squared);

// Mean nearest-neighbour term from `source` into an already indexed target.
double one_sided_chamfer(std::span<const Vec3> source, const KdTree& target,
                         ChamferNorm norm = ChamferNorm::squared);

enum class EmdMode { exact_assignment, approximate };

struct EmdResult {
  double value = 0.0;  // mean matched Euclidean distance
  EmdMode method = EmdMode::exact_assignment;
  std::vector<std::size_t> assignment;  // a[i] is matched to b[assignment[i]]
  double epsilon_final = 0.0;           // auction tolerance, 0 for exact
};

inline constexpr std::size_t kExactEmdLimit = 1024;

// Exact mode: Hungarian algorithm on the Euclidean cost matrix (|a| <= 1024).
// Approximate mode: epsilon-scaling auction; epsilon starts at max_cost / 8 and
// is divided by 4 after every phase, the last phase being the first with
// epsilon < 1e-6 * max_cost. The result is a perfect matching whose mean cost
// is within epsilon_final of the optimum.
EmdResult emd(const PointCloud& a, const PointCloud& b, EmdMode mode);

// Minimum-cost perfect matching on a dense row-major n x n cost matrix.
std::vector<std::size_t> hungarian_assignment(std::span<const double> cost, std::size_t n);
std::vector<std::size_t> auction_assignment(std::span<const double> cost, std::size_t n,
                                            double* epsilon_final = nullptr);

std::string_view to_string(ChamferDirection d);
std::string_view to_string(EmdMode m);

}  // namespace cadfit
