#include "perimotion/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "perimotion/errors.hpp"

namespace perimotion {

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }

  const double denom = va + vb + vc;
  if (denom == 0.0) {
    // Degenerate (zero-area) triangle: nearest of the three edges.
    auto seg = [&](const Vec3& s, const Vec3& e) -> Vec3 {
      const Vec3 d = e - s;
      const double len2 = d.squaredNorm();
      if (len2 == 0.0) return s;
      return s + std::clamp((p - s).dot(d) / len2, 0.0, 1.0) * d;
    };
    const Vec3 q1 = seg(a, b), q2 = seg(b, c), q3 = seg(c, a);
    const double e1 = (p - q1).squaredNorm(), e2 = (p - q2).squaredNorm(), e3 = (p - q3).squaredNorm();
    if (e1 <= e2 && e1 <= e3) return q1;
    return e2 <= e3 ? q2 : q3;
  }
  const double v = vb / denom;
  const double w = vc / denom;
  return a + ab * v + ac * w;
}

double point_triangle_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  return (p - closest_point_on_triangle(p, a, b, c)).norm();
}

namespace {

void require_surface(const TriangleMesh& mesh, const char* which) {
  if (mesh.vertices.empty() || mesh.faces.empty()) {
    throw DataError(std::string("hausdorff: mesh ") + which + " is empty");
  }
}

}  // namespace

double point_surface_distance_brute_force(const Vec3& p, const TriangleMesh& mesh) {
  double best = std::numeric_limits<double>::infinity();
  for (const Face& f : mesh.faces) {
    best = std::min(best, point_triangle_distance(p, mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]));
  }
  return best;
}

double directed_hausdorff(const TriangleMesh& from, const TriangleMesh& to) {
  require_surface(from, "a");
  require_surface(to, "b");
  const TriangleDistanceIndex index(to);
  double worst = 0.0;
  for (const Vec3& v : from.vertices) worst = std::max(worst, index.distance(v));
  return worst;
}

double directed_hausdorff_brute_force(const TriangleMesh& from, const TriangleMesh& to) {
  require_surface(from, "a");
  require_surface(to, "b");
  double worst = 0.0;
  for (const Vec3& v : from.vertices) worst = std::max(worst, point_surface_distance_brute_force(v, to));
  return worst;
}

double hausdorff(const TriangleMesh& a, const TriangleMesh& b) {
  return std::max(directed_hausdorff(a, b), directed_hausdorff(b, a));
}

double hausdorff_brute_force(const TriangleMesh& a, const TriangleMesh& b) {
  return std::max(directed_hausdorff_brute_force(a, b), directed_hausdorff_brute_force(b, a));
}

double psnr(const Grid3& image, const Grid3& reference) {
  if (image.shape != reference.shape || image.values.size() != reference.values.size()) {
    throw ContractError("psnr: image and reference shapes differ");
  }
  if (reference.values.empty()) throw ContractError("psnr: empty frames");
  double peak = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (std::size_t i = 0; i < reference.values.size(); ++i) {
    const double r = reference.values[i];
    peak = std::max(peak, r);
    const double d = static_cast<double>(image.values[i]) - r;
    sum += d * d;
  }
  if (!(peak > 0.0)) throw DataError("psnr: reference frame has no positive intensity, peak undefined");
  const double mse = sum / static_cast<double>(reference.values.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("pearson: need two equal-length series of >= 2");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return sxy / std::sqrt(sxx * syy);
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double rank = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ContractError("spearman: need two equal-length series of >= 2");
  const std::vector<double> rx = average_ranks(x);
  const std::vector<double> ry = average_ranks(y);
  return pearson(rx, ry);
}

}  // namespace perimotion
