#include "perimotion/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

#include "perimotion/errors.hpp"

namespace perimotion {
namespace {

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

}  // namespace

void TriangleMesh::validate() const {
  const auto n = static_cast<std::uint32_t>(vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    const Face& face = faces[f];
    for (std::uint32_t idx : face) {
      if (idx >= n) {
        throw ValidationError("mesh: face " + std::to_string(f) + " references vertex " + std::to_string(idx) +
                              " but only " + std::to_string(n) + " exist");
      }
    }
    if (face[0] == face[1] || face[1] == face[2] || face[0] == face[2]) {
      throw ValidationError("mesh: face " + std::to_string(f) + " is degenerate (repeated vertex index)");
    }
  }
}

std::optional<std::pair<std::uint32_t, std::uint32_t>> find_boundary_edge(const TriangleMesh& mesh) {
  std::unordered_map<std::uint64_t, int> uses;
  uses.reserve(mesh.faces.size() * 3);
  for (const Face& f : mesh.faces) {
    for (int e = 0; e < 3; ++e) ++uses[edge_key(f[e], f[(e + 1) % 3])];
  }
  // Report the smallest boundary edge so the result does not depend on hash order.
  std::optional<std::uint64_t> first;
  for (const auto& [key, count] : uses) {
    if (count == 1 && (!first || key < *first)) first = key;
  }
  if (!first) return std::nullopt;
  return std::make_pair(static_cast<std::uint32_t>(*first >> 32), static_cast<std::uint32_t>(*first & 0xFFFFFFFFu));
}

double mesh_volume(const TriangleMesh& mesh) {
  mesh.validate();
  if (mesh.faces.empty()) throw DataError("mesh_volume: mesh has no faces");
  if (const auto edge = find_boundary_edge(mesh)) {
    throw DataError("mesh_volume: open mesh, boundary edge (" + std::to_string(edge->first) + ", " +
                    std::to_string(edge->second) + ")");
  }
  double six_volume = 0.0;
  for (const Face& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    six_volume += a.dot(b.cross(c));
  }
  return six_volume / 6.0;
}

TriangleMesh flipped_orientation(const TriangleMesh& mesh) {
  TriangleMesh out = mesh;
  for (Face& f : out.faces) std::swap(f[1], f[2]);
  return out;
}

TriangleMesh make_icosphere(double radius, int subdivisions, const Vec3& center) {
  if (!(radius > 0.0)) throw ContractError("make_icosphere: radius must be positive");
  if (subdivisions < 0 || subdivisions > 8) throw ContractError("make_icosphere: subdivisions must be in [0, 8]");

  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> unit = {
      {-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0}, {0, -1, phi}, {0, 1, phi},
      {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1},
  };
  for (Vec3& v : unit) v.normalize();
  std::vector<Face> faces = {
      {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
      {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
      {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
  };

  for (int level = 0; level < subdivisions; ++level) {
    std::map<std::uint64_t, std::uint32_t> midpoints;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const std::uint64_t key = edge_key(a, b);
      if (auto it = midpoints.find(key); it != midpoints.end()) return it->second;
      const auto idx = static_cast<std::uint32_t>(unit.size());
      unit.push_back((unit[a] + unit[b]).normalized());
      midpoints.emplace(key, idx);
      return idx;
    };
    std::vector<Face> refined;
    refined.reserve(faces.size() * 4);
    for (const Face& f : faces) {
      const std::uint32_t ab = midpoint(f[0], f[1]);
      const std::uint32_t bc = midpoint(f[1], f[2]);
      const std::uint32_t ca = midpoint(f[2], f[0]);
      refined.push_back({f[0], ab, ca});
      refined.push_back({f[1], bc, ab});
      refined.push_back({f[2], ca, bc});
      refined.push_back({ab, bc, ca});
    }
    faces = std::move(refined);
  }

  TriangleMesh mesh;
  mesh.faces = std::move(faces);
  mesh.vertices.reserve(unit.size());
  for (const Vec3& u : unit) mesh.vertices.push_back(center + radius * u);
  return mesh;
}

void write_obj(const TriangleMesh& mesh, std::ostream& out) {
  char line[128];
  for (const Vec3& v : mesh.vertices) {
    const int n = std::snprintf(line, sizeof(line), "v %.9g %.9g %.9g\n", v.x(), v.y(), v.z());
    out.write(line, n);
  }
  for (const Face& f : mesh.faces) {
    const int n = std::snprintf(line, sizeof(line), "f %u %u %u\n", f[0] + 1, f[1] + 1, f[2] + 1);
    out.write(line, n);
  }
  if (!out) throw DataError("write_obj: stream write failed");
}

void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("write_obj: cannot open " + path.string());
  write_obj(mesh, out);
}

TriangleMesh read_obj(std::istream& in, const std::string& source) {
  TriangleMesh mesh;
  std::vector<std::pair<Face, std::size_t>> pending;  // face and its line number
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& why) -> DataError {
    return DataError(source + ":" + std::to_string(line_no) + ": " + why);
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;
    if (tag == "v") {
      double x = 0, y = 0, z = 0;
      if (!(ss >> x >> y >> z)) throw fail("malformed vertex record");
      mesh.vertices.emplace_back(x, y, z);
    } else if (tag == "f") {
      std::vector<long long> idx;
      std::string token;
      while (ss >> token) {
        const std::string head = token.substr(0, token.find('/'));
        std::size_t used = 0;
        long long value = 0;
        try {
          value = std::stoll(head, &used);
        } catch (const std::exception&) {
          throw fail("malformed face index '" + token + "'");
        }
        if (used != head.size()) throw fail("malformed face index '" + token + "'");
        idx.push_back(value);
      }
      if (idx.size() != 3) {
        throw fail("face with " + std::to_string(idx.size()) + " vertices; only triangles are supported");
      }
      Face face{};
      for (int k = 0; k < 3; ++k) {
        if (idx[k] < 1) throw fail("face index " + std::to_string(idx[k]) + " out of range");
        face[k] = static_cast<std::uint32_t>(idx[k] - 1);
      }
      pending.emplace_back(face, line_no);
    }
  }
  if (mesh.vertices.empty() && pending.empty()) throw DataError(source + ": no geometry");
  for (const auto& [face, at] : pending) {
    for (std::uint32_t v : face) {
      if (v >= mesh.vertices.size()) {
        throw DataError(source + ":" + std::to_string(at) + ": face index " + std::to_string(v + 1) +
                        " out of range (" + std::to_string(mesh.vertices.size()) + " vertices)");
      }
    }
    mesh.faces.push_back(face);
  }
  mesh.validate();
  return mesh;
}

TriangleMesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("read_obj: cannot open " + path.string());
  return read_obj(in, path.string());
}

}  // namespace perimotion
