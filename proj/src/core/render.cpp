#include "cadfit/render.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "cadfit/error.hpp"
#include "cadfit/io.hpp"

namespace cadfit {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) throw Error(ErrorCode::invalid_argument, "focal lengths must be positive");
  if (width <= 0 || height <= 0) throw Error(ErrorCode::invalid_argument, "image size must be positive");
  if (!std::isfinite(cx) || !std::isfinite(cy)) throw Error(ErrorCode::invalid_argument, "principal point not finite");
}

Intrinsics Intrinsics::from_fov(int width, int height, double horizontal_fov_rad) {
  const double f = 0.5 * width / std::tan(0.5 * horizontal_fov_rad);
  return {f, f, 0.5 * width, 0.5 * height, width, height};
}

void CameraView::validate() const {
  intrinsics.validate();
  if (depth) {
    if (depth->width != intrinsics.width || depth->height != intrinsics.height) {
      throw Error(ErrorCode::invalid_argument, "depth map size differs from camera resolution");
    }
    for (double d : depth->values) {
      if (!std::isfinite(d) || d < 0.0) throw Error(ErrorCode::invalid_argument, "depth values must be finite and >= 0");
    }
  }
}

Eigen::Isometry3d CameraView::look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(up);
  if (right.norm() < 1e-9) right = forward.cross(Vec3::UnitX());
  right.normalize();
  const Vec3 down = forward.cross(right);
  Mat3 camera_to_world;
  camera_to_world.col(0) = right;
  camera_to_world.col(1) = down;
  camera_to_world.col(2) = forward;
  Eigen::Isometry3d w2c = Eigen::Isometry3d::Identity();
  w2c.linear() = camera_to_world.transpose();
  w2c.translation() = -(camera_to_world.transpose() * eye);
  return w2c;
}

std::size_t RenderOutput::coverage() const {
  return static_cast<std::size_t>(std::count(silhouette.begin(), silhouette.end(), std::uint8_t{1}));
}

RenderOutput RenderOutput::from_depth(DepthImage depth) {
  RenderOutput out;
  out.silhouette.resize(depth.values.size());
  for (std::size_t i = 0; i < depth.values.size(); ++i) out.silhouette[i] = depth.values[i] > 0.0 ? 1 : 0;
  out.depth = std::move(depth);
  return out;
}

void PixelRect::add(int x, int y) {
  if (empty()) {
    x0 = x1 = x;
    y0 = y1 = y;
    return;
  }
  x0 = std::min(x0, x);
  x1 = std::max(x1, x);
  y0 = std::min(y0, y);
  y1 = std::max(y1, y);
}

PixelRect PixelRect::united(const PixelRect& o) const {
  if (empty()) return o;
  if (o.empty()) return *this;
  return {std::min(x0, o.x0), std::min(y0, o.y0), std::max(x1, o.x1), std::max(y1, o.y1)};
}

PixelRect PixelRect::of(const DepthImage& depth) {
  PixelRect r;
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      if (depth.at(x, y) > 0.0) r.add(x, y);
    }
  }
  return r;
}

namespace {

// Clips a camera-space polygon against z >= near (Sutherland-Hodgman, one plane).
int clip_near(const std::array<Vec3, 3>& in, std::array<Vec3, 4>& out) {
  int count = 0;
  for (int i = 0; i < 3; ++i) {
    const Vec3& a = in[i];
    const Vec3& b = in[(i + 1) % 3];
    const bool a_in = a.z() >= kNearPlane;
    const bool b_in = b.z() >= kNearPlane;
    if (a_in) out[count++] = a;
    if (a_in != b_in) {
      const double t = (kNearPlane - a.z()) / (b.z() - a.z());
      Vec3 p = a + t * (b - a);
      p.z() = kNearPlane;
      out[count++] = p;
    }
  }
  return count;
}

void raster_triangle(const Vec3& c0, const Vec3& c1, const Vec3& c2, const Intrinsics& k, std::int32_t label,
                     DepthImage& zbuf, std::vector<std::int32_t>* labels, PixelRect& rect) {
  const double x0 = k.fx * c0.x() / c0.z() + k.cx, y0 = k.fy * c0.y() / c0.z() + k.cy;
  const double x1 = k.fx * c1.x() / c1.z() + k.cx, y1 = k.fy * c1.y() / c1.z() + k.cy;
  const double x2 = k.fx * c2.x() / c2.z() + k.cx, y2 = k.fy * c2.y() / c2.z() + k.cy;
  const double area = (x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0);
  if (!std::isfinite(area) || std::abs(area) < 1e-14) return;

  const int xmin = std::max(0, static_cast<int>(std::floor(std::min({x0, x1, x2}) - 0.5)));
  const int xmax = std::min(k.width - 1, static_cast<int>(std::ceil(std::max({x0, x1, x2}) - 0.5)));
  const int ymin = std::max(0, static_cast<int>(std::floor(std::min({y0, y1, y2}) - 0.5)));
  const int ymax = std::min(k.height - 1, static_cast<int>(std::ceil(std::max({y0, y1, y2}) - 0.5)));
  if (xmin > xmax || ymin > ymax) return;

  const double inv_area = 1.0 / area;
  const double iz0 = 1.0 / c0.z(), iz1 = 1.0 / c1.z(), iz2 = 1.0 / c2.z();
  // Edge functions are affine in the pixel center: w = a * px + b * py + c.
  const double a0 = -(y2 - y1) * inv_area, b0 = (x2 - x1) * inv_area;
  const double a1 = -(y0 - y2) * inv_area, b1 = (x0 - x2) * inv_area;
  const double c0w = (x1 * y2 - x2 * y1) * inv_area;
  const double c1w = (x2 * y0 - x0 * y2) * inv_area;
  for (int y = ymin; y <= ymax; ++y) {
    const double py = y + 0.5;
    const double row0 = b0 * py + c0w, row1 = b1 * py + c1w;
    double* zrow = &zbuf.at(0, y);
    // Span where all three weights can be non-negative, padded by a pixel;
    // the per-pixel test below stays authoritative.
    double lo = xmin + 0.5, hi = xmax + 0.5;
    bool empty = false;
    auto clip = [&](double a, double r) {
      if (a > 0.0) lo = std::max(lo, -r / a);
      else if (a < 0.0) hi = std::min(hi, -r / a);
      else if (r < 0.0) empty = true;
    };
    clip(a0, row0);
    clip(a1, row1);
    clip(-a0 - a1, 1.0 - row0 - row1);
    if (empty || !(lo <= hi + 2.0)) continue;
    const int xs = std::max(xmin, static_cast<int>(std::floor(lo - 0.5)) - 1);
    const int xe = std::min(xmax, static_cast<int>(std::ceil(hi - 0.5)) + 1);
    for (int x = xs; x <= xe; ++x) {
      const double px = x + 0.5;
      // Barycentric weights of vertices 0 and 1; both signs of area accepted.
      const double w0 = a0 * px + row0;
      const double w1 = a1 * px + row1;
      const double w2 = 1.0 - w0 - w1;
      if (w0 < 0.0 || w1 < 0.0 || w2 < 0.0) continue;
      // Inverse depth is affine in screen space. Anchoring on vertex 2 keeps
      // constant-depth triangles exact.
      const double inv_z = iz2 + w0 * (iz0 - iz2) + w1 * (iz1 - iz2);
      if (!(inv_z > 0.0)) continue;
      double& cur = zrow[x];
      // The buffer holds inverse depth until the final conversion.
      if (cur == 0.0 || inv_z > cur) {
        cur = inv_z;
        rect.add(x, y);
        if (labels) (*labels)[static_cast<std::size_t>(y) * k.width + x] = label;
      }
    }
  }
}

void raster_into(const TriMesh& mesh, const CameraView& view, DepthImage& zbuf, std::vector<std::int32_t>* labels,
                 PixelRect& rect) {
  rect = PixelRect{};
  view.intrinsics.validate();
  const Intrinsics& k = view.intrinsics;
  zbuf.width = k.width;
  zbuf.height = k.height;
  zbuf.values.assign(static_cast<std::size_t>(k.width) * k.height, 0.0);
  if (labels) labels->assign(zbuf.pixel_count(), -1);

  thread_local std::vector<Vec3> cam;
  cam.resize(mesh.vertices.size());
  for (std::size_t i = 0; i < mesh.vertices.size(); ++i) cam[i] = view.world_to_camera * mesh.vertices[i];

  std::array<Vec3, 4> poly;
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const std::array<Vec3, 3> v{cam[tri[0]], cam[tri[1]], cam[tri[2]]};
    if (v[0].z() < kNearPlane && v[1].z() < kNearPlane && v[2].z() < kNearPlane) continue;
    const auto label = static_cast<std::int32_t>(t);
    if (v[0].z() >= kNearPlane && v[1].z() >= kNearPlane && v[2].z() >= kNearPlane) {
      raster_triangle(v[0], v[1], v[2], k, label, zbuf, labels, rect);
      continue;
    }
    const int n = clip_near(v, poly);
    for (int i = 1; i + 1 < n; ++i) raster_triangle(poly[0], poly[i], poly[i + 1], k, label, zbuf, labels, rect);
  }
  for (int y = rect.y0; y <= rect.y1; ++y) {
    for (int x = rect.x0; x <= rect.x1; ++x) {
      double& d = zbuf.at(x, y);
      if (d > 0.0) d = 1.0 / d;
    }
  }
}

LabeledRender rasterize_impl(const TriMesh& mesh, const CameraView& view, bool with_labels) {
  LabeledRender out;
  DepthImage zbuf;
  PixelRect rect;
  raster_into(mesh, view, zbuf, with_labels ? &out.triangle : nullptr, rect);
  out.render = RenderOutput::from_depth(std::move(zbuf));
  return out;
}

}  // namespace

void rasterize_depth(const TriMesh& mesh, const CameraView& view, DepthImage& out, PixelRect* covered) {
  PixelRect rect;
  raster_into(mesh, view, out, nullptr, rect);
  if (covered) *covered = rect;
}

RenderOutput rasterize(const TriMesh& mesh, const CameraView& view) {
  return rasterize_impl(mesh, view, false).render;
}

LabeledRender rasterize_labeled(const TriMesh& mesh, const CameraView& view) {
  return rasterize_impl(mesh, view, true);
}

PointCloud backproject(const DepthImage& depth, const CameraView& view) {
  const Intrinsics& k = view.intrinsics;
  k.validate();
  if (depth.width != k.width || depth.height != k.height) {
    throw Error(ErrorCode::invalid_argument, "depth map size differs from camera resolution");
  }
  const Eigen::Isometry3d cam_to_world = view.world_to_camera.inverse();
  PointCloud cloud;
  for (int y = 0; y < depth.height; ++y) {
    for (int x = 0; x < depth.width; ++x) {
      const double d = depth.at(x, y);
      if (!(d > 0.0)) continue;
      const Vec3 p((x + 0.5 - k.cx) / k.fx * d, (y + 0.5 - k.cy) / k.fy * d, d);
      cloud.points.push_back(cam_to_world * p);
    }
  }
  return cloud;
}

PointCloud backproject(const CameraView& view) {
  if (!view.depth) throw Error(ErrorCode::invalid_argument, "camera view carries no depth map");
  return backproject(*view.depth, view);
}

std::string encode_depth_pgm(const DepthImage& depth, double scale) {
  if (!(scale > 0.0)) throw Error(ErrorCode::invalid_argument, "depth scale must be positive");
  char header[160];
  std::snprintf(header, sizeof header, "P5\n# depth_scale %.17g\n%d %d\n65535\n", scale, depth.width, depth.height);
  std::string out(header);
  out.reserve(out.size() + depth.values.size() * 2);
  for (double d : depth.values) {
    const double q = std::clamp(std::round(d / scale), 0.0, 65535.0);
    const auto v = static_cast<std::uint16_t>(q);
    out.push_back(static_cast<char>(v >> 8));
    out.push_back(static_cast<char>(v & 0xff));
  }
  return out;
}

DepthImage decode_depth_pgm(const std::string& bytes) {
  std::size_t pos = 0;
  double scale = 1e-3;
  auto fail = [&](const std::string& what) {
    throw Error(ErrorCode::parse_error, "malformed depth PGM: " + what, "offset " + std::to_string(pos));
  };
  auto skip_space_and_comments = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        const auto eol = bytes.find('\n', pos);
        const std::string comment = bytes.substr(pos + 1, eol == std::string::npos ? std::string::npos : eol - pos - 1);
        std::istringstream cs(comment);
        std::string key;
        double value = 0.0;
        if (cs >> key >> value && key == "depth_scale" && value > 0.0) scale = value;
        pos = eol == std::string::npos ? bytes.size() : eol + 1;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_int = [&] {
    skip_space_and_comments();
    const std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (start == pos) fail("expected integer");
    return std::stol(bytes.substr(start, pos - start));
  };
  if (bytes.size() < 2 || bytes.compare(0, 2, "P5") != 0) fail("missing P5 magic");
  pos = 2;
  const long w = read_int();
  const long h = read_int();
  const long maxval = read_int();
  if (w <= 0 || h <= 0 || maxval != 65535) fail("unsupported dimensions or maxval");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) fail("missing header terminator");
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 2;
  if (bytes.size() - pos < need) fail("truncated pixel data");
  DepthImage depth(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < depth.values.size(); ++i) {
    const auto hi = static_cast<unsigned char>(bytes[pos + 2 * i]);
    const auto lo = static_cast<unsigned char>(bytes[pos + 2 * i + 1]);
    depth.values[i] = static_cast<double>((hi << 8) | lo) * scale;
  }
  return depth;
}

void write_depth_pgm(const std::filesystem::path& path, const DepthImage& depth, double scale) {
  write_text_file(path, encode_depth_pgm(depth, scale));
}

DepthImage read_depth_pgm(const std::filesystem::path& path) {
  return decode_depth_pgm(read_text_file(path));
}

}  // namespace cadfit
