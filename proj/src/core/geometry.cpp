#include "cadfit/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/Eigenvalues>

#include "cadfit/error.hpp"

namespace cadfit {

void TriMesh::validate() const {
  const auto n = vertices.size();
  for (std::size_t i = 0; i < triangles.size(); ++i) {
    const auto& t = triangles[i];
    if (t[0] >= n || t[1] >= n || t[2] >= n) {
      throw Error(ErrorCode::invalid_argument, "triangle index out of range",
                  "triangle " + std::to_string(i));
    }
    if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) {
      throw Error(ErrorCode::invalid_argument, "degenerate triangle (repeated index)",
                  "triangle " + std::to_string(i));
    }
  }
}

Mat3 Pose9D::rotation_matrix() const { return axis_angle_to_matrix(rotation); }

Vec3 Pose9D::apply(const Vec3& p) const {
  return rotation_matrix() * scale.cwiseProduct(p) + translation;
}

void Pose9D::validate() const {
  if (!translation.allFinite() || !rotation.allFinite() || !scale.allFinite()) {
    throw Error(ErrorCode::invalid_argument, "pose has non-finite components");
  }
  if ((scale.array() <= 0.0).any()) {
    throw Error(ErrorCode::invalid_argument, "pose scale must be strictly positive");
  }
}

Mat3 axis_angle_to_matrix(const Vec3& axis_angle) {
  const double angle = axis_angle.norm();
  if (angle < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, axis_angle / angle).toRotationMatrix();
}

Vec3 matrix_to_axis_angle(const Mat3& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  Vec3 v = aa.axis() * aa.angle();
  return canonical_axis_angle(v);
}

Vec3 canonical_axis_angle(const Vec3& axis_angle) {
  double angle = axis_angle.norm();
  if (angle < 1e-300) return Vec3::Zero();
  if (angle <= std::numbers::pi) return axis_angle;
  Vec3 axis = axis_angle / angle;
  angle = std::fmod(angle, 2.0 * std::numbers::pi);
  if (angle > std::numbers::pi) {
    angle = 2.0 * std::numbers::pi - angle;
    axis = -axis;
  }
  return axis * angle;
}

Mat3 rotation_about_up(double radians) {
  return Eigen::AngleAxisd(radians, kUpAxis).toRotationMatrix();
}

double rotation_angle_between(const Mat3& a, const Mat3& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

TriMesh apply_pose(const TriMesh& mesh, const Pose9D& pose) {
  TriMesh out;
  out.triangles = mesh.triangles;
  out.vertices.reserve(mesh.vertices.size());
  const Mat3 r = pose.rotation_matrix();
  for (const auto& v : mesh.vertices) {
    out.vertices.push_back(r * pose.scale.cwiseProduct(v) + pose.translation);
  }
  return out;
}

PointCloud apply_pose(const PointCloud& cloud, const Pose9D& pose) {
  PointCloud out;
  out.points.reserve(cloud.size());
  const Mat3 r = pose.rotation_matrix();
  for (const auto& p : cloud.points) {
    out.points.push_back(r * pose.scale.cwiseProduct(p) + pose.translation);
  }
  return out;
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

double surface_area(const TriMesh& mesh) {
  double total = 0.0;
  for (const auto& t : mesh.triangles) {
    total += triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
  }
  return total;
}

PointCloud sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw Error(ErrorCode::invalid_argument, "sample count must be >= 1");
  std::vector<double> cumulative;
  cumulative.reserve(mesh.triangles.size());
  double total = 0.0;
  for (const auto& t : mesh.triangles) {
    total += triangle_area(mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    cumulative.push_back(total);
  }
  if (!(total > 0.0)) throw Error(ErrorCode::degenerate, "degenerate surface");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PointCloud out;
  out.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pick = unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const auto& t = mesh.triangles[static_cast<std::size_t>(it - cumulative.begin())];
    const double r1 = std::sqrt(unit(rng));
    const double r2 = unit(rng);
    const Vec3& a = mesh.vertices[t[0]];
    const Vec3& b = mesh.vertices[t[1]];
    const Vec3& c = mesh.vertices[t[2]];
    out.points.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
  }
  return out;
}

namespace {

// Product of the point ranges along the columns of `axes` (only the first
// `dims` columns contribute).
double projected_extent_product(std::span<const Vec3> points, const Mat3& axes, int dims) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& p : points) {
    const Vec3 q = axes.transpose() * p;
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  double product = 1.0;
  for (int i = 0; i < dims; ++i) product *= hi[i] - lo[i];
  return product;
}

// Rotates a degenerate eigen-subspace (columns [first, first+count)) so that
// the box volume over the points is minimal. Degenerate covariance leaves the
// PCA basis arbitrary inside that subspace.
Mat3 resolve_degenerate_block(std::span<const Vec3> points, const Mat3& axes, int first, int count) {
  // Express the block in a local frame whose leading columns are the block.
  Mat3 local;
  int col = 0;
  for (int i = first; i < first + count; ++i) local.col(col++) = axes.col(i);
  for (int i = 0; i < 3; ++i) {
    if (i < first || i >= first + count) local.col(col++) = axes.col(i);
  }

  auto evaluate = [&](const Vec3& angles) {
    Mat3 r;
    if (count == 2) {
      r = Eigen::AngleAxisd(angles[0], Vec3::UnitZ()).toRotationMatrix();
    } else {
      r = (Eigen::AngleAxisd(angles[0], Vec3::UnitZ()) * Eigen::AngleAxisd(angles[1], Vec3::UnitY()) *
           Eigen::AngleAxisd(angles[2], Vec3::UnitX()))
              .toRotationMatrix();
    }
    return std::pair{local * r, projected_extent_product(points, local * r, count)};
  };

  const int params = count == 2 ? 1 : 3;
  const int grid = count == 2 ? 90 : 12;
  const double span = std::numbers::pi / 2.0;
  Vec3 best = Vec3::Zero();
  double best_value = evaluate(best).second;
  const int total = params == 1 ? grid : grid * grid * grid;
  for (int k = 0; k < total; ++k) {
    Vec3 a = Vec3::Zero();
    int rem = k;
    for (int p = 0; p < params; ++p) {
      a[p] = span * (rem % grid) / grid;
      rem /= grid;
    }
    const double v = evaluate(a).second;
    if (v < best_value - 1e-15) {
      best_value = v;
      best = a;
    }
  }
  // Pattern search around the best grid cell.
  for (double step = span / grid; step > 1e-10; step *= 0.5) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (int p = 0; p < params; ++p) {
        for (double dir : {-1.0, 1.0}) {
          Vec3 a = best;
          a[p] += dir * step;
          const double v = evaluate(a).second;
          if (v < best_value - 1e-15) {
            best_value = v;
            best = a;
            improved = true;
          }
        }
      }
    }
  }
  const Mat3 solved = evaluate(best).first;
  Mat3 out = axes;
  for (int i = 0; i < count; ++i) out.col(first + i) = solved.col(i);
  return out;
}

}  // namespace

ObbResult oriented_bbox(std::span<const Vec3> points) {
  if (points.empty()) throw Error(ErrorCode::invalid_argument, "oriented_bbox needs at least one point");
  ObbResult box;
  if (points.size() == 1) {
    box.center = points.front();
    return box;
  }

  Vec3 mean = Vec3::Zero();
  for (const auto& p : points) mean += p;
  mean /= static_cast<double>(points.size());
  Mat3 cov = Mat3::Zero();
  for (const auto& p : points) {
    const Vec3 d = p - mean;
    cov += d * d.transpose();
  }
  cov /= static_cast<double>(points.size());

  Eigen::SelfAdjointEigenSolver<Mat3> solver(cov);
  // Eigen returns ascending order.
  Vec3 values(solver.eigenvalues()[2], solver.eigenvalues()[1], solver.eigenvalues()[0]);
  Mat3 axes;
  axes.col(0) = solver.eigenvectors().col(2);
  axes.col(1) = solver.eigenvectors().col(1);
  axes.col(2) = solver.eigenvectors().col(0);

  std::vector<Vec3> centered;
  centered.reserve(points.size());
  for (const auto& p : points) centered.push_back(p - mean);
  std::span<const Vec3> search_points = centered;
  std::vector<Vec3> subsample;
  if (centered.size() > 512) {
    const std::size_t stride = (centered.size() + 511) / 512;
    for (std::size_t i = 0; i < centered.size(); i += stride) subsample.push_back(centered[i]);
    search_points = subsample;
  }

  const double tol = 1e-6 * std::max(values[0], 1e-300);
  int first = 0;
  while (first < 3) {
    int last = first;
    while (last + 1 < 3 && std::abs(values[first] - values[last + 1]) <= tol) ++last;
    const int count = last - first + 1;
    if (count > 1) axes = resolve_degenerate_block(search_points, axes, first, count);
    first = last + 1;
  }
  if (axes.determinant() < 0.0) axes.col(2) = -axes.col(2);

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const auto& p : points) {
    const Vec3 q = axes.transpose() * p;
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  box.axes = axes;
  box.extents = 0.5 * (hi - lo);
  box.center = axes * (0.5 * (hi + lo));
  return box;
}

Aabb bounding_box(std::span<const Vec3> points) {
  if (points.empty()) throw Error(ErrorCode::invalid_argument, "bounding box of empty set");
  Aabb box{points.front(), points.front()};
  for (const auto& p : points) {
    box.min = box.min.cwiseMin(p);
    box.max = box.max.cwiseMax(p);
  }
  return box;
}

TriMesh normalize_to_unit_cube(const TriMesh& mesh) {
  const Aabb box = bounding_box(mesh.vertices);
  const Vec3 c = box.center();
  const Vec3 size = box.size();
  TriMesh out = mesh;
  for (auto& v : out.vertices) {
    for (int i = 0; i < 3; ++i) v[i] = size[i] > 0.0 ? (v[i] - c[i]) / size[i] : v[i] - c[i];
  }
  return out;
}

TriMesh normalize_to_unit_diagonal(const TriMesh& mesh) {
  const Aabb box = bounding_box(mesh.vertices);
  const double diag = box.size().norm();
  if (!(diag > 0.0)) throw Error(ErrorCode::degenerate, "mesh has zero extent");
  TriMesh out = mesh;
  for (auto& v : out.vertices) v = (v - box.center()) / diag;
  return out;
}

TriMesh merge(std::span<const TriMesh> parts) {
  TriMesh out;
  for (const auto& part : parts) {
    const auto base = static_cast<std::uint32_t>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), part.vertices.begin(), part.vertices.end());
    for (const auto& t : part.triangles) out.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
  }
  return out;
}

}  // namespace cadfit
