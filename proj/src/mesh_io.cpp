#include "catpose/mesh_io.hpp"

#include <array>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <vector>

namespace catpose {

namespace {

[[noreturn]] void io_fail(const std::string& path, const std::string& what) {
  throw Error(ErrorCode::IoFailure, path + ": " + what);
}

struct PlyProperty {
  std::string type;
  std::string name;
  bool is_list = false;
  std::string count_type;
};

struct PlyElement {
  std::string name;
  size_t count = 0;
  std::vector<PlyProperty> properties;
};

double read_scalar(std::istream& in, const std::string& type, bool binary) {
  if (!binary) {
    double v;
    in >> v;
    return v;
  }
  auto read_as = [&in](auto value) -> double {
    in.read(reinterpret_cast<char*>(&value), sizeof(value));
    return static_cast<double>(value);
  };
  if (type == "float" || type == "float32") return read_as(float{});
  if (type == "double" || type == "float64") return read_as(double{});
  if (type == "uchar" || type == "uint8") return read_as(uint8_t{});
  if (type == "char" || type == "int8") return read_as(int8_t{});
  if (type == "ushort" || type == "uint16") return read_as(uint16_t{});
  if (type == "short" || type == "int16") return read_as(int16_t{});
  if (type == "uint" || type == "uint32") return read_as(uint32_t{});
  if (type == "int" || type == "int32") return read_as(int32_t{});
  throw Error(ErrorCode::IoFailure, "unsupported ply scalar type " + type);
}

struct PlyData {
  MatX3 vertices;
  MatX3i faces;
  bool has_faces = false;
};

PlyData read_ply(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_fail(path, "cannot open");
  std::string line;
  std::getline(in, line);
  if (line.rfind("ply", 0) != 0) io_fail(path, "not a ply file");

  bool binary = false;
  std::vector<PlyElement> elements;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "format") {
      std::string fmt;
      ss >> fmt;
      if (fmt == "binary_little_endian") binary = true;
      else if (fmt == "ascii") binary = false;
      else io_fail(path, "unsupported ply format " + fmt);
    } else if (word == "element") {
      PlyElement e;
      ss >> e.name >> e.count;
      elements.push_back(e);
    } else if (word == "property") {
      if (elements.empty()) io_fail(path, "property before element");
      PlyProperty p;
      ss >> p.type;
      if (p.type == "list") {
        p.is_list = true;
        ss >> p.count_type >> p.type >> p.name;
      } else {
        ss >> p.name;
      }
      elements.back().properties.push_back(p);
    } else if (word == "end_header") {
      break;
    }
  }

  PlyData data;
  for (const auto& elem : elements) {
    if (elem.name == "vertex") {
      data.vertices.resize(static_cast<Eigen::Index>(elem.count), 3);
      for (size_t i = 0; i < elem.count; ++i) {
        for (const auto& p : elem.properties) {
          const double v = read_scalar(in, p.type, binary);
          if (p.name == "x") data.vertices(static_cast<Eigen::Index>(i), 0) = v;
          else if (p.name == "y") data.vertices(static_cast<Eigen::Index>(i), 1) = v;
          else if (p.name == "z") data.vertices(static_cast<Eigen::Index>(i), 2) = v;
        }
      }
    } else if (elem.name == "face") {
      data.has_faces = true;
      std::vector<std::array<int, 3>> tris;
      tris.reserve(elem.count);
      for (size_t i = 0; i < elem.count; ++i) {
        for (const auto& p : elem.properties) {
          if (!p.is_list) {
            read_scalar(in, p.type, binary);
            continue;
          }
          const int n = static_cast<int>(read_scalar(in, p.count_type, binary));
          std::vector<int> idx(n);
          for (int k = 0; k < n; ++k) idx[k] = static_cast<int>(read_scalar(in, p.type, binary));
          // Fan-triangulate polygons.
          for (int k = 2; k < n; ++k) tris.push_back({idx[0], idx[k - 1], idx[k]});
        }
      }
      data.faces.resize(static_cast<Eigen::Index>(tris.size()), 3);
      for (size_t i = 0; i < tris.size(); ++i)
        for (int c = 0; c < 3; ++c) data.faces(static_cast<Eigen::Index>(i), c) = tris[i][c];
    } else {
      // Skip unknown elements only for ascii (no sized layout otherwise).
      if (binary) io_fail(path, "unsupported element " + elem.name);
      for (size_t i = 0; i < elem.count; ++i) std::getline(in, line);
    }
    if (!in) io_fail(path, "truncated ply data");
  }
  return data;
}

void write_ply(const std::string& path, const MatX3& vertices, const MatX3i* faces) {
  std::ofstream out(path, std::ios::binary);
  if (!out) io_fail(path, "cannot open for writing");
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "element vertex " << vertices.rows() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (faces) {
    out << "element face " << faces->rows() << "\n";
    out << "property list uchar int vertex_indices\n";
  }
  out << "end_header\n";
  for (Eigen::Index i = 0; i < vertices.rows(); ++i) {
    const float v[3] = {static_cast<float>(vertices(i, 0)), static_cast<float>(vertices(i, 1)),
                        static_cast<float>(vertices(i, 2))};
    out.write(reinterpret_cast<const char*>(v), sizeof(v));
  }
  if (faces) {
    for (Eigen::Index f = 0; f < faces->rows(); ++f) {
      const uint8_t n = 3;
      out.write(reinterpret_cast<const char*>(&n), 1);
      const int32_t idx[3] = {(*faces)(f, 0), (*faces)(f, 1), (*faces)(f, 2)};
      out.write(reinterpret_cast<const char*>(idx), sizeof(idx));
    }
  }
  if (!out) io_fail(path, "write failed");
}

}  // namespace

TriangleMesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) io_fail(path, "cannot open");
  std::vector<Vec3> verts;
  std::vector<std::array<int, 3>> tris;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word == "v") {
      Vec3 v;
      ss >> v[0] >> v[1] >> v[2];
      verts.push_back(v);
    } else if (word == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ss >> tok) {
        // "i", "i/t", "i/t/n", "i//n" forms; vertex index is the first field.
        idx.push_back(std::stoi(tok.substr(0, tok.find('/'))));
      }
      for (size_t k = 2; k < idx.size(); ++k) {
        auto fix = [&](int i) { return i > 0 ? i - 1 : static_cast<int>(verts.size()) + i; };
        tris.push_back({fix(idx[0]), fix(idx[k - 1]), fix(idx[k])});
      }
    }
  }
  TriangleMesh mesh;
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  mesh.triangles.resize(static_cast<Eigen::Index>(tris.size()), 3);
  for (size_t i = 0; i < tris.size(); ++i)
    for (int c = 0; c < 3; ++c) mesh.triangles(static_cast<Eigen::Index>(i), c) = tris[i][c];
  mesh.validate();
  return mesh;
}

void write_obj(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) io_fail(path, "cannot open for writing");
  out.precision(17);
  for (Eigen::Index i = 0; i < mesh.vertex_count(); ++i)
    out << "v " << mesh.vertices(i, 0) << " " << mesh.vertices(i, 1) << " " << mesh.vertices(i, 2) << "\n";
  for (Eigen::Index f = 0; f < mesh.face_count(); ++f)
    out << "f " << mesh.triangles(f, 0) + 1 << " " << mesh.triangles(f, 1) + 1 << " "
        << mesh.triangles(f, 2) + 1 << "\n";
  if (!out) io_fail(path, "write failed");
}

TriangleMesh read_ply_mesh(const std::string& path) {
  const PlyData data = read_ply(path);
  if (!data.has_faces) io_fail(path, "ply has no face element");
  TriangleMesh mesh{data.vertices, data.faces};
  mesh.validate();
  return mesh;
}

void write_ply_mesh(const TriangleMesh& mesh, const std::string& path) {
  write_ply(path, mesh.vertices, &mesh.triangles);
}

PointCloud read_ply_points(const std::string& path) {
  const PlyData data = read_ply(path);
  return PointCloud(data.vertices);
}

void write_ply_points(const PointCloud& pc, const std::string& path) {
  write_ply(path, pc.points, nullptr);
}

}  // namespace catpose
