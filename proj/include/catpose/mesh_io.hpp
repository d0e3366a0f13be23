#pragma once

#include <string>

#include "catpose/types.hpp"

namespace catpose {

// OBJ: v/f records only; other records are ignored on read.
TriangleMesh read_obj(const std::string& path);
void write_obj(const TriangleMesh& mesh, const std::string& path);

// PLY: binary little-endian on write; ascii and binary little-endian on read.
// Positions and triangles only.
TriangleMesh read_ply_mesh(const std::string& path);
void write_ply_mesh(const TriangleMesh& mesh, const std::string& path);

PointCloud read_ply_points(const std::string& path);
void write_ply_points(const PointCloud& pc, const std::string& path);

}  // namespace catpose
