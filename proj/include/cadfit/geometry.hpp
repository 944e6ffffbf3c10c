#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace cadfit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// World frame is z-up; gravity points along -z.
inline const Vec3 kUpAxis = Vec3::UnitZ();

struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<std::uint32_t, 3>> triangles;

  bool empty() const { return triangles.empty(); }

  // Throws Error(invalid_argument) on out-of-range or repeated indices.
  void validate() const;
};

struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

// 9-DoF placement of a canonical model: x -> R(rotation) * (scale ⊙ x) + translation.
struct Pose9D {
  Vec3 translation = Vec3::Zero();
  Vec3 rotation = Vec3::Zero();  // axis-angle, radians
  Vec3 scale = Vec3::Ones();

  static Pose9D identity() { return {}; }

  Mat3 rotation_matrix() const;
  Vec3 apply(const Vec3& p) const;
  void validate() const;
};

struct ObbResult {
  Vec3 center = Vec3::Zero();
  Mat3 axes = Mat3::Identity();  // columns are box axes, right-handed
  Vec3 extents = Vec3::Zero();   // half sizes along each column of `axes`

  double volume() const { return 8.0 * extents.prod(); }
};

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  Vec3 center() const { return 0.5 * (min + max); }
  Vec3 size() const { return max - min; }
};

Mat3 axis_angle_to_matrix(const Vec3& axis_angle);
// Inverse of axis_angle_to_matrix, magnitude in [0, pi].
Vec3 matrix_to_axis_angle(const Mat3& rotation);
Vec3 canonical_axis_angle(const Vec3& axis_angle);
Mat3 rotation_about_up(double radians);
// Geodesic angle between two rotations, radians.
double rotation_angle_between(const Mat3& a, const Mat3& b);

TriMesh apply_pose(const TriMesh& mesh, const Pose9D& pose);
PointCloud apply_pose(const PointCloud& cloud, const Pose9D& pose);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);
double surface_area(const TriMesh& mesh);

// Area-weighted uniform surface sampling. Deterministic for a fixed seed.
PointCloud sample_surface(const TriMesh& mesh, std::size_t n, std::uint64_t seed);

// PCA-aligned box: axes are covariance eigenvectors in descending eigenvalue
// order; extents and center come from the projected point ranges.
ObbResult oriented_bbox(std::span<const Vec3> points);
inline ObbResult oriented_bbox(const PointCloud& cloud) { return oriented_bbox(cloud.points); }

Aabb bounding_box(std::span<const Vec3> points);

// Anisotropic normalization into the canonical CAD frame [-0.5, 0.5]^3.
// Axes with zero extent are centered but left unscaled.
TriMesh normalize_to_unit_cube(const TriMesh& mesh);
// Isotropic normalization: bounding box centered at the origin, diagonal 1.
TriMesh normalize_to_unit_diagonal(const TriMesh& mesh);

TriMesh merge(std::span<const TriMesh> parts);

}  // namespace cadfit
