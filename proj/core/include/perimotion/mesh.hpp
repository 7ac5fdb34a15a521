#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "perimotion/geometry.hpp"

namespace perimotion {

using Face = std::array<std::uint32_t, 3>;

// Triangle surface in world millimetres. Faces are counter-clockwise when
// seen from outside, so closed meshes have positive volume.
struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  bool empty() const noexcept { return vertices.empty() || faces.empty(); }

  // Throws ValidationError on out-of-range or repeated face indices.
  void validate() const;
};

// First undirected edge used by exactly one face, if any.
std::optional<std::pair<std::uint32_t, std::uint32_t>> find_boundary_edge(const TriangleMesh& mesh);

// Signed enclosed volume via the origin-based divergence theorem. Throws
// DataError for meshes with a boundary edge.
double mesh_volume(const TriangleMesh& mesh);

// Returns a copy with every vertex mapped through fn; faces are untouched.
template <typename Fn>
TriangleMesh map_vertices(const TriangleMesh& mesh, Fn&& fn) {
  TriangleMesh out{{}, mesh.faces};
  out.vertices.reserve(mesh.vertices.size());
  for (const Vec3& v : mesh.vertices) out.vertices.push_back(fn(v));
  return out;
}

TriangleMesh flipped_orientation(const TriangleMesh& mesh);

// Icosahedron refined `subdivisions` times and projected onto the sphere.
// Level 4 has 2562 vertices and 5120 faces.
TriangleMesh make_icosphere(double radius, int subdivisions, const Vec3& center = Vec3::Zero());

// ASCII OBJ, v and f records only; coordinates with 9 significant digits.
void write_obj(const TriangleMesh& mesh, std::ostream& out);
void write_obj(const TriangleMesh& mesh, const std::filesystem::path& path);

// Accepts v/f records; ignores comments, vn/vt/o/g/s/usemtl records and the
// texture/normal parts of "f a/b/c" tokens. Non-triangular faces and bad
// indices are DataErrors naming the line.
TriangleMesh read_obj(std::istream& in, const std::string& source = "<stream>");
TriangleMesh read_obj(const std::filesystem::path& path);

}  // namespace perimotion
