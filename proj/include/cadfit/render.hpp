#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cadfit/geometry.hpp"

namespace cadfit {

struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;

  void validate() const;
  // Symmetric pinhole with the given horizontal field of view.
  static Intrinsics from_fov(int width, int height, double horizontal_fov_rad);
};

// Row-major H x W grid of depths in meters; 0 marks background / invalid.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> values;

  DepthImage() = default;
  DepthImage(int w, int h) : width(w), height(h), values(static_cast<std::size_t>(w) * h, 0.0) {}

  double at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  double& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
  std::size_t pixel_count() const { return values.size(); }
};

// Camera frame: +z forward, +x right, +y down. Pixel (u, v) has its center at
// (u + 0.5, v + 0.5) in image coordinates.
struct CameraView {
  Intrinsics intrinsics;
  Eigen::Isometry3d world_to_camera = Eigen::Isometry3d::Identity();
  std::optional<DepthImage> depth;

  void validate() const;
  Vec3 camera_center() const { return world_to_camera.inverse().translation(); }
  static Eigen::Isometry3d look_at(const Vec3& eye, const Vec3& target, const Vec3& up = kUpAxis);
};

struct RenderOutput {
  DepthImage depth;
  std::vector<std::uint8_t> silhouette;  // 1 where depth > 0

  int width() const { return depth.width; }
  int height() const { return depth.height; }
  std::size_t coverage() const;
  static RenderOutput from_depth(DepthImage depth);
};

// Per-pixel index of the visible triangle, -1 for background.
struct LabeledRender {
  RenderOutput render;
  std::vector<std::int32_t> triangle;
};

inline constexpr double kNearPlane = 1e-3;

// Z-buffered perspective rasterization of the nearest surface. No back-face
// culling; geometry in front of the near plane is clipped, not discarded.
RenderOutput rasterize(const TriMesh& mesh, const CameraView& view);
LabeledRender rasterize_labeled(const TriMesh& mesh, const CameraView& view);
// Inclusive pixel rectangle; empty when x1 < x0.
struct PixelRect {
  int x0 = 0, y0 = 0, x1 = -1, y1 = -1;

  bool empty() const { return x1 < x0 || y1 < y0; }
  void add(int x, int y);
  PixelRect united(const PixelRect& other) const;
  static PixelRect of(const DepthImage& depth);  // bounds of the valid pixels
};

// Depth only, written into `out` (resized as needed, capacity reused).
// `covered` receives the bounds of the written pixels.
void rasterize_depth(const TriMesh& mesh, const CameraView& view, DepthImage& out, PixelRect* covered = nullptr);

// Unprojects every valid pixel of view.depth into world coordinates.
PointCloud backproject(const CameraView& view);
PointCloud backproject(const DepthImage& depth, const CameraView& view);

// Target-side observation for one camera: what the scan shows of the object.
struct TargetView {
  CameraView camera;
  RenderOutput observed;
};

// 16-bit binary PGM; the header comment "# depth_scale <meters per unit>"
// records the quantization step (default 1 mm).
std::string encode_depth_pgm(const DepthImage& depth, double scale = 1e-3);
DepthImage decode_depth_pgm(const std::string& bytes);
void write_depth_pgm(const std::filesystem::path& path, const DepthImage& depth, double scale = 1e-3);
DepthImage read_depth_pgm(const std::filesystem::path& path);

}  // namespace cadfit
