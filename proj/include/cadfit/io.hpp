#pragma once

#include <filesystem>
#include <string>

#include "cadfit/geometry.hpp"

namespace cadfit {

// Wavefront OBJ: `v` and `f` records only. Polygons are fan-triangulated,
// negative (relative) indices and `v/vt/vn` forms are accepted.
TriMesh load_obj(const std::filesystem::path& path);
TriMesh parse_obj(const std::string& text);
void save_obj(const std::filesystem::path& path, const TriMesh& mesh);

// ASCII "x y z" per line; blank lines and '#' comments ignored.
PointCloud load_xyz(const std::filesystem::path& path);
PointCloud parse_xyz(const std::string& text);
void save_xyz(const std::filesystem::path& path, const PointCloud& cloud);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace cadfit
