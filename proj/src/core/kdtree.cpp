#include "cadfit/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

namespace cadfit {

KdTree::KdTree(std::span<const Vec3> points, std::size_t leaf_size) {
  if (points.empty()) return;
  points_.assign(points.begin(), points.end());
  index_.resize(points.size());
  std::iota(index_.begin(), index_.end(), std::size_t{0});
  nodes_.reserve(2 * points.size() / std::max<std::size_t>(leaf_size, 1) + 1);
  build(0, static_cast<std::uint32_t>(points.size()), std::max<std::size_t>(leaf_size, 1));

  std::vector<Vec3> ordered;
  ordered.reserve(points_.size());
  for (auto i : index_) ordered.push_back(points[i]);
  points_ = std::move(ordered);
}

std::int32_t KdTree::build(std::uint32_t begin, std::uint32_t end, std::size_t leaf_size) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end, -1, -1, 0, 0.0});
  if (end - begin <= leaf_size) return id;

  Vec3 lo = points_[index_[begin]];
  Vec3 hi = lo;
  for (auto i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[index_[i]]);
    hi = hi.cwiseMax(points_[index_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  const auto mid = begin + (end - begin) / 2;
  std::nth_element(index_.begin() + begin, index_.begin() + mid, index_.begin() + end,
                   [&](std::size_t a, std::size_t b) { return points_[a][axis] < points_[b][axis]; });
  const double split = points_[index_[mid]][axis];

  const auto left = build(begin, mid, leaf_size);
  const auto right = build(mid, end, leaf_size);
  nodes_[id].left = left;
  nodes_[id].right = right;
  nodes_[id].axis = axis;
  nodes_[id].split = split;
  return id;
}

template <bool Scaled>
void KdTree::search(std::int32_t node_id, const Vec3& q, const Vec3& s, Neighbor& best, double* offsets) const {
  const Node& node = nodes_[node_id];
  if (node.left < 0) {
    for (auto i = node.begin; i < node.end; ++i) {
      const Vec3& p = points_[i];
      double dx, dy, dz;
      if constexpr (Scaled) {
        dx = q.x() - s.x() * p.x();
        dy = q.y() - s.y() * p.y();
        dz = q.z() - s.z() * p.z();
      } else {
        dx = q.x() - p.x();
        dy = q.y() - p.y();
        dz = q.z() - p.z();
      }
      const double d = dx * dx + dy * dy + dz * dz;
      if (d < best.squared_distance || (d == best.squared_distance && index_[i] < best.index)) {
        best.squared_distance = d;
        best.index = index_[i];
      }
    }
    return;
  }
  const double split = Scaled ? s[node.axis] * node.split : node.split;
  const double diff = q[node.axis] - split;
  const auto near = diff < 0.0 ? node.left : node.right;
  const auto far = diff < 0.0 ? node.right : node.left;
  search<Scaled>(near, q, s, best, offsets);
  // Lower bound on the distance to the far cell from the per-axis offsets.
  // The slack keeps rounding from pruning a cell holding an exact tie.
  const double saved = offsets[node.axis];
  offsets[node.axis] = diff * diff;
  const double bound = offsets[0] + offsets[1] + offsets[2];
  if (bound <= best.squared_distance * (1.0 + 1e-9)) search<Scaled>(far, q, s, best, offsets);
  offsets[node.axis] = saved;
}

Neighbor KdTree::nearest(const Vec3& query) const {
  Neighbor best{0, std::numeric_limits<double>::infinity()};
  double offsets[3] = {0.0, 0.0, 0.0};
  if (!nodes_.empty()) search<false>(0, query, Vec3::Ones(), best, offsets);
  return best;
}

Neighbor KdTree::nearest_scaled(const Vec3& query, const Vec3& scale) const {
  Neighbor best{0, std::numeric_limits<double>::infinity()};
  double offsets[3] = {0.0, 0.0, 0.0};
  if (!nodes_.empty()) search<true>(0, query, scale, best, offsets);
  return best;
}

}  // namespace cadfit
