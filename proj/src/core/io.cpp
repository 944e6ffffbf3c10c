#include "cadfit/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string_view>

#include "cadfit/error.hpp"

namespace cadfit {

namespace {

std::string location(std::size_t line) { return "line " + std::to_string(line); }

}  // namespace

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::io_error, "cannot open file for reading", path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::io_error, "cannot open file for writing", path.string());
  out << text;
  if (!out) throw Error(ErrorCode::io_error, "write failed", path.string());
}

TriMesh parse_obj(const std::string& text) {
  TriMesh mesh;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) {
        throw Error(ErrorCode::parse_error, "malformed vertex record", location(lineno));
      }
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<std::uint32_t> face;
      std::string token;
      while (ls >> token) {
        const std::string_view head = std::string_view(token).substr(0, token.find('/'));
        long index = 0;
        auto [ptr, ec] = std::from_chars(head.data(), head.data() + head.size(), index);
        if (ec != std::errc() || ptr != head.data() + head.size() || index == 0) {
          throw Error(ErrorCode::parse_error, "malformed face index '" + token + "'", location(lineno));
        }
        const long resolved = index > 0 ? index - 1 : static_cast<long>(mesh.vertices.size()) + index;
        if (resolved < 0 || resolved >= static_cast<long>(mesh.vertices.size())) {
          throw Error(ErrorCode::parse_error, "face index out of range", location(lineno));
        }
        face.push_back(static_cast<std::uint32_t>(resolved));
      }
      if (face.size() < 3) throw Error(ErrorCode::parse_error, "face with fewer than 3 vertices", location(lineno));
      for (std::size_t i = 1; i + 1 < face.size(); ++i) {
        std::array<std::uint32_t, 3> tri{face[0], face[i], face[i + 1]};
        // Collapsed polygon corners would violate the mesh invariant; drop them.
        if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
        mesh.triangles.push_back(tri);
      }
    }
  }
  return mesh;
}

TriMesh load_obj(const std::filesystem::path& path) {
  try {
    return parse_obj(read_text_file(path));
  } catch (const Error& e) {
    if (e.code() == ErrorCode::parse_error) {
      throw Error(e.code(), e.what(), path.string() + ": " + e.detail());
    }
    throw;
  }
}

void save_obj(const std::filesystem::path& path, const TriMesh& mesh) {
  std::string out;
  char buf[128];
  for (const auto& v : mesh.vertices) {
    std::snprintf(buf, sizeof buf, "v %.17g %.17g %.17g\n", v.x(), v.y(), v.z());
    out += buf;
  }
  for (const auto& t : mesh.triangles) {
    std::snprintf(buf, sizeof buf, "f %u %u %u\n", t[0] + 1, t[1] + 1, t[2] + 1);
    out += buf;
  }
  write_text_file(path, out);
}

PointCloud parse_xyz(const std::string& text) {
  PointCloud cloud;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    Vec3 p;
    if (!(ls >> p.x())) continue;
    if (!(ls >> p.y() >> p.z())) throw Error(ErrorCode::parse_error, "expected 'x y z'", location(lineno));
    std::string extra;
    if (ls >> extra) throw Error(ErrorCode::parse_error, "trailing data after 'x y z'", location(lineno));
    cloud.points.push_back(p);
  }
  return cloud;
}

PointCloud load_xyz(const std::filesystem::path& path) { return parse_xyz(read_text_file(path)); }

void save_xyz(const std::filesystem::path& path, const PointCloud& cloud) {
  std::string out;
  out.reserve(cloud.size() * 64);
  char buf[96];
  for (const auto& p : cloud.points) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.x(), p.y(), p.z());
    out += buf;
  }
  write_text_file(path, out);
}

}  // namespace cadfit
