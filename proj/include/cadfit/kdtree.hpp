#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cadfit/geometry.hpp"

namespace cadfit {

struct Neighbor {
  std::size_t index = 0;  // index into the point set the tree was built from
  double squared_distance = 0.0;
};

// Static 3-d tree over a point set, immutable after construction and safe
// for concurrent queries.
//
// Distances are accumulated as dx*dx + dy*dy + dz*dz in x, y, z order so that
// the reported minimum is bit-identical to a brute-force scan using the same
// expression.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Vec3> points, std::size_t leaf_size = 8);

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }

  Neighbor nearest(const Vec3& query) const;

  // Nearest neighbour among the points scaled per axis by `scale` (all
  // components > 0). Positive diagonal scaling preserves every axis-aligned
  // split, so the same tree serves any anisotropic scale.
  Neighbor nearest_scaled(const Vec3& query, const Vec3& scale) const;

 private:
  struct Node {
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
    std::int32_t left = -1;
    std::int32_t right = -1;
    int axis = 0;
    double split = 0.0;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end, std::size_t leaf_size);
  template <bool Scaled>
  void search(std::int32_t node, const Vec3& query, const Vec3& scale, Neighbor& best, double* offsets) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> index_;
  std::vector<Node> nodes_;
};

}  // namespace cadfit
