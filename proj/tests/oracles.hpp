#pragma once

// Independent reference implementations used to check the library.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <random>
#include <vector>

#include "cadfit/geometry.hpp"

namespace oracle {

using cadfit::PointCloud;
using cadfit::Vec3;

inline double sq(const Vec3& a, const Vec3& b) {
  const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
  return dx * dx + dy * dy + dz * dz;
}

inline double nearest_sq(const Vec3& q, const std::vector<Vec3>& pts) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pts) best = std::min(best, sq(q, p));
  return best;
}

inline double one_sided(const std::vector<Vec3>& a, const std::vector<Vec3>& b, bool squared = true) {
  double sum = 0.0;
  for (const auto& p : a) {
    const double d = nearest_sq(p, b);
    sum += squared ? d : std::sqrt(d);
  }
  return sum / static_cast<double>(a.size());
}

inline double symmetric(const std::vector<Vec3>& a, const std::vector<Vec3>& b, bool squared = true) {
  return one_sided(a, b, squared) + one_sided(b, a, squared);
}

inline PointCloud random_cloud(std::mt19937_64& rng, std::size_t n, double spread = 1.0) {
  std::uniform_real_distribution<double> u(-spread, spread);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) c.points.emplace_back(u(rng), u(rng), u(rng));
  return c;
}

// Min-cost perfect matching by successive shortest augmenting paths
// (Bellman-Ford on the residual graph). O(n^4) worst case; for n <= ~128.
inline double min_cost_matching(const std::vector<double>& cost, std::size_t n) {
  // Nodes: source 0, rows 1..n, cols n+1..2n, sink 2n+1.
  const std::size_t N = 2 * n + 2, src = 0, dst = 2 * n + 1;
  struct Edge {
    std::size_t to, rev;
    int cap;
    double w;
  };
  std::vector<std::vector<Edge>> g(N);
  auto add = [&](std::size_t u, std::size_t v, double w) {
    g[u].push_back({v, g[v].size(), 1, w});
    g[v].push_back({u, g[u].size() - 1, 0, -w});
  };
  for (std::size_t i = 0; i < n; ++i) add(src, 1 + i, 0.0);
  for (std::size_t j = 0; j < n; ++j) add(n + 1 + j, dst, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) add(1 + i, n + 1 + j, cost[i * n + j]);
  double total = 0.0;
  for (std::size_t flow = 0; flow < n; ++flow) {
    std::vector<double> dist(N, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> pv(N), pe(N);
    std::vector<bool> inq(N, false);
    std::queue<std::size_t> q;
    dist[src] = 0.0;
    q.push(src);
    while (!q.empty()) {
      const std::size_t u = q.front();
      q.pop();
      inq[u] = false;
      for (std::size_t k = 0; k < g[u].size(); ++k) {
        const Edge& e = g[u][k];
        if (e.cap > 0 && dist[u] + e.w < dist[e.to] - 1e-15) {
          dist[e.to] = dist[u] + e.w;
          pv[e.to] = u;
          pe[e.to] = k;
          if (!inq[e.to]) {
            inq[e.to] = true;
            q.push(e.to);
          }
        }
      }
    }
    for (std::size_t v = dst; v != src; v = pv[v]) {
      Edge& e = g[pv[v]][pe[v]];
      e.cap -= 1;
      g[v][e.rev].cap += 1;
    }
    total += dist[dst];
  }
  return total;
}

inline double brute_force_matching(const std::vector<double>& cost, std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cost[i * n + perm[i]];
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

inline std::vector<double> distance_matrix(const PointCloud& a, const PointCloud& b) {
  const std::size_t n = a.size();
  std::vector<double> c(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = std::sqrt(sq(a.points[i], b.points[j]));
  return c;
}

// Gradient of mean_i min_j |p_i - (R (s * x_j) + t)|^2 with respect to t.
inline Vec3 chamfer_translation_gradient(const std::vector<Vec3>& scan, const std::vector<Vec3>& model,
                                         const cadfit::Pose9D& pose) {
  const cadfit::Mat3 r = cadfit::axis_angle_to_matrix(pose.rotation);
  std::vector<Vec3> posed;
  posed.reserve(model.size());
  for (const auto& x : model) posed.push_back(r * pose.scale.cwiseProduct(x) + pose.translation);
  Vec3 g = Vec3::Zero();
  for (const auto& p : scan) {
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < posed.size(); ++j) {
      const double d = sq(p, posed[j]);
      if (d < bd) {
        bd = d;
        best = j;
      }
    }
    g += -2.0 * (p - posed[best]);
  }
  return g / static_cast<double>(scan.size());
}

// Unsquared symmetric chamfer of `a` against each of `others[k-1]` rotated
// by k * 45 degrees about z, k = 1..7.
inline std::vector<double> rotation_chamfers(const std::vector<Vec3>& a, const std::vector<std::vector<Vec3>>& others) {
  std::vector<double> out;
  for (int k = 1; k < 8; ++k) {
    const double ang = k * M_PI / 4.0;
    const double c = std::cos(ang), s = std::sin(ang);
    std::vector<Vec3> rot;
    for (const auto& p : others[k - 1]) rot.emplace_back(c * p.x() - s * p.y(), s * p.x() + c * p.y(), p.z());
    out.push_back(symmetric(a, rot, false));
  }
  return out;
}

// Distance from p to the closest point of triangle abc: the in-plane
// projection when it falls inside, otherwise the nearest edge point.
inline double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 n = (b - a).cross(c - a);
  const double nn = n.squaredNorm();
  if (nn > 0.0) {
    const Vec3 q = p - n * ((p - a).dot(n) / nn);
    const double s1 = (b - a).cross(q - a).dot(n), s2 = (c - b).cross(q - b).dot(n), s3 = (a - c).cross(q - c).dot(n);
    if ((s1 >= 0 && s2 >= 0 && s3 >= 0) || (s1 <= 0 && s2 <= 0 && s3 <= 0)) return (p - q).norm();
  }
  auto seg = [&](const Vec3& u, const Vec3& v) {
    const Vec3 d = v - u;
    const double len = d.squaredNorm();
    const double t = len > 0 ? std::clamp((p - u).dot(d) / len, 0.0, 1.0) : 0.0;
    return (p - (u + t * d)).norm();
  };
  return std::min({seg(a, b), seg(b, c), seg(c, a)});
}

inline double point_mesh_distance(const Vec3& p, const cadfit::TriMesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& t : mesh.triangles) {
    best = std::min(best, point_triangle_distance(p, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]));
  }
  return best;
}

inline cadfit::Mat3 rot_z(double a) {
  cadfit::Mat3 r;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return r;
}

}  // namespace oracle
