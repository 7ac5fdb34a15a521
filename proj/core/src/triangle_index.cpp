#include <algorithm>
#include <array>
#include <limits>
#include <numeric>

#include "perimotion/errors.hpp"
#include "perimotion/metrics.hpp"

namespace perimotion {

namespace {

constexpr std::size_t kLeafSize = 4;

struct Box {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void grow(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void grow(const Box& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  double squared_distance(const Vec3& p) const {
    const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
    return d.squaredNorm();
  }
};

struct Node {
  Box box;
  std::uint32_t first = 0;  // leaf: first triangle slot; inner: left child (right = first + 1)
  std::uint32_t count = 0;  // triangles in a leaf, 0 for inner nodes
};

}  // namespace

struct TriangleDistanceIndex::Impl {
  std::vector<std::array<Vec3, 3>> triangles;
  std::vector<Node> nodes;

  void build(std::vector<std::uint32_t>& order, const std::vector<Vec3>& centroids, const std::vector<Box>& boxes,
             std::size_t node, std::size_t begin, std::size_t end) {
    Box box;
    Box centroid_box;
    for (std::size_t i = begin; i < end; ++i) {
      box.grow(boxes[order[i]]);
      centroid_box.grow(centroids[order[i]]);
    }
    nodes[node].box = box;
    const Vec3 spread = centroid_box.hi - centroid_box.lo;
    if (end - begin <= kLeafSize || spread.maxCoeff() <= 0.0) {
      nodes[node].first = static_cast<std::uint32_t>(begin);
      nodes[node].count = static_cast<std::uint32_t>(end - begin);
      return;
    }
    Eigen::Index axis = 0;
    spread.maxCoeff(&axis);
    const std::size_t mid = begin + (end - begin) / 2;
    std::nth_element(order.begin() + static_cast<std::ptrdiff_t>(begin), order.begin() + static_cast<std::ptrdiff_t>(mid),
                     order.begin() + static_cast<std::ptrdiff_t>(end),
                     [&](std::uint32_t a, std::uint32_t b) { return centroids[a][axis] < centroids[b][axis]; });
    const std::size_t left = nodes.size();
    nodes.emplace_back();
    nodes.emplace_back();
    nodes[node].first = static_cast<std::uint32_t>(left);
    nodes[node].count = 0;
    build(order, centroids, boxes, left, begin, mid);
    build(order, centroids, boxes, left + 1, mid, end);
  }
};

TriangleDistanceIndex::TriangleDistanceIndex(const TriangleMesh& mesh) : impl_(std::make_unique<Impl>()) {
  if (mesh.faces.empty()) throw DataError("TriangleDistanceIndex: mesh has no faces");
  const std::size_t n = mesh.faces.size();
  std::vector<Vec3> centroids(n);
  std::vector<Box> boxes(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::uint32_t v : mesh.faces[i]) {
      if (v >= mesh.vertices.size()) throw DataError("TriangleDistanceIndex: face index out of range");
      boxes[i].grow(mesh.vertices[v]);
    }
    centroids[i] = (mesh.vertices[mesh.faces[i][0]] + mesh.vertices[mesh.faces[i][1]] + mesh.vertices[mesh.faces[i][2]]) / 3.0;
  }
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  impl_->nodes.reserve(2 * n);
  impl_->nodes.emplace_back();
  impl_->build(order, centroids, boxes, 0, 0, n);
  impl_->triangles.reserve(n);
  for (std::uint32_t f : order) {
    const Face& face = mesh.faces[f];
    impl_->triangles.push_back({mesh.vertices[face[0]], mesh.vertices[face[1]], mesh.vertices[face[2]]});
  }
}

TriangleDistanceIndex::~TriangleDistanceIndex() = default;
TriangleDistanceIndex::TriangleDistanceIndex(TriangleDistanceIndex&&) noexcept = default;
TriangleDistanceIndex& TriangleDistanceIndex::operator=(TriangleDistanceIndex&&) noexcept = default;

double TriangleDistanceIndex::distance(const Vec3& p) const {
  const auto& nodes = impl_->nodes;
  const auto& tris = impl_->triangles;
  double best = std::numeric_limits<double>::infinity();
  double best_sq = best;
  std::array<std::uint32_t, 128> stack{};
  std::size_t top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes[stack[--top]];
    if (node.box.squared_distance(p) > best_sq) continue;
    if (node.count > 0) {
      for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
        const double d = point_triangle_distance(p, tris[i][0], tris[i][1], tris[i][2]);
        if (d < best) {
          best = d;
          best_sq = d * d;
        }
      }
      continue;
    }
    const std::uint32_t l = node.first;
    const std::uint32_t r = node.first + 1;
    const double dl = nodes[l].box.squared_distance(p);
    const double dr = nodes[r].box.squared_distance(p);
    // Nearer child on top of the stack.
    if (dl <= dr) {
      stack[top++] = r;
      stack[top++] = l;
    } else {
      stack[top++] = l;
      stack[top++] = r;
    }
  }
  return best;
}

}  // namespace perimotion
