#include "perimotion/volume.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "perimotion/errors.hpp"

namespace perimotion {

void Volume4D::validate() const {
  if (frames.size() < 2) throw ValidationError("volume: at least 2 frames required, got " + std::to_string(frames.size()));
  if (frame_times.size() != frames.size()) {
    throw ValidationError("volume: " + std::to_string(frame_times.size()) + " frame times for " +
                          std::to_string(frames.size()) + " frames");
  }
  if (shape[0] == 0 || shape[1] == 0 || shape[2] == 0) throw ValidationError("volume: empty grid shape");
  for (std::size_t i = 0; i < frames.size(); ++i) {
    if (frames[i].shape != shape || frames[i].values.size() != shape[0] * shape[1] * shape[2]) {
      throw ValidationError("volume: frame " + std::to_string(i) + " shape differs from the volume shape");
    }
  }
  if (!(spacing_mm.array() > 0.0).all() || !spacing_mm.allFinite()) {
    throw ValidationError("volume: spacing must be positive and finite");
  }
  if (!origin_mm.allFinite()) throw ValidationError("volume: origin must be finite");
  if (frame_times.front() != 0.0) throw ValidationError("volume: first frame time must be 0");
  if (frame_times.back() != 1.0) throw ValidationError("volume: last frame time must be 1");
  for (std::size_t i = 1; i < frame_times.size(); ++i) {
    if (!(frame_times[i] > frame_times[i - 1])) {
      throw ValidationError("volume: frame times not strictly increasing at index " + std::to_string(i));
    }
  }
}

std::vector<double> uniform_frame_times(std::size_t n) {
  if (n < 2) throw ContractError("uniform_frame_times: need at least 2 frames");
  std::vector<double> t(n);
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i) / static_cast<double>(n - 1);
  return t;
}

DomainNormalizer::DomainNormalizer(const Vec3& world_min, const Vec3& world_max)
    : min_(world_min), max_(world_max), center_(0.5 * (world_min + world_max)), half_(0.5 * (world_max - world_min)) {
  if (!(half_.array() > 0.0).all()) throw ContractError("DomainNormalizer: bounding box must have positive extent");
}

DomainNormalizer DomainNormalizer::for_volume(const Volume4D& volume) {
  Vec3 extent;
  for (int a = 0; a < 3; ++a) {
    const std::size_t n = volume.shape[static_cast<std::size_t>(a)];
    // A single-voxel axis gets a one-voxel box so the map stays invertible.
    extent[a] = n > 1 ? static_cast<double>(n - 1) * volume.spacing_mm[a] : volume.spacing_mm[a];
  }
  return {volume.origin_mm, volume.origin_mm + extent};
}

Vec3 DomainNormalizer::to_normalized(const Vec3& world) const {
  return (world - center_).cwiseQuotient(half_);
}

Vec3 DomainNormalizer::to_world(const Vec3& normalized) const {
  return center_ + normalized.cwiseProduct(half_);
}

TrilinearSample sample_trilinear(const Grid3& grid, const Vec3& normalized) {
  if (!normalized.allFinite()) throw NumericalError(-1, "sample_trilinear: non-finite point");
  std::array<std::size_t, 3> lo{};
  std::array<double, 3> frac{};
  std::array<double, 3> dudp{};  // d(continuous index)/d(normalized), zero when clamped
  for (std::size_t a = 0; a < 3; ++a) {
    const std::size_t n = grid.shape[a];
    if (n == 1) {
      lo[a] = 0;
      frac[a] = 0.0;
      dudp[a] = 0.0;
      continue;
    }
    const double scale = 0.5 * static_cast<double>(n - 1);
    double u = (normalized[static_cast<Eigen::Index>(a)] + 1.0) * scale;
    dudp[a] = scale;
    const double top = static_cast<double>(n - 1);
    if (u <= 0.0) {
      if (u < 0.0) dudp[a] = 0.0;
      u = 0.0;
    } else if (u >= top) {
      if (u > top) dudp[a] = 0.0;
      u = top;
    }
    std::size_t cell = static_cast<std::size_t>(std::floor(u));
    if (cell >= n - 1) cell = n - 2;
    lo[a] = cell;
    frac[a] = u - static_cast<double>(cell);
  }

  auto corner = [&](std::size_t di, std::size_t dj, std::size_t dk) -> double {
    const std::size_t i = std::min(lo[0] + di, grid.shape[0] - 1);
    const std::size_t j = std::min(lo[1] + dj, grid.shape[1] - 1);
    const std::size_t k = std::min(lo[2] + dk, grid.shape[2] - 1);
    return grid.at(i, j, k);
  };
  const double c000 = corner(0, 0, 0), c100 = corner(1, 0, 0), c010 = corner(0, 1, 0), c110 = corner(1, 1, 0);
  const double c001 = corner(0, 0, 1), c101 = corner(1, 0, 1), c011 = corner(0, 1, 1), c111 = corner(1, 1, 1);
  const double fx = frac[0], fy = frac[1], fz = frac[2];

  const double c00 = c000 + fx * (c100 - c000);
  const double c10 = c010 + fx * (c110 - c010);
  const double c01 = c001 + fx * (c101 - c001);
  const double c11 = c011 + fx * (c111 - c011);
  const double c0 = c00 + fy * (c10 - c00);
  const double c1 = c01 + fy * (c11 - c01);

  TrilinearSample s;
  s.value = c0 + fz * (c1 - c0);

  const double dx0 = (c100 - c000) + fy * ((c110 - c010) - (c100 - c000));
  const double dx1 = (c101 - c001) + fy * ((c111 - c011) - (c101 - c001));
  const double dvdx = dx0 + fz * (dx1 - dx0);
  const double dvdy = (c10 - c00) + fz * ((c11 - c01) - (c10 - c00));
  const double dvdz = c1 - c0;
  s.gradient = Vec3(dvdx * dudp[0], dvdy * dudp[1], dvdz * dudp[2]);
  return s;
}

template <std::floating_point T>
ad::Var<T> sample_trilinear(const Grid3& grid, ad::Var<T> points) {
  const ad::Array<T>& p = points.value();
  if (p.cols != 3) throw ContractError("sample_trilinear: points must be B x 3");
  ad::Array<T> values(p.rows, 1);
  ad::Array<T> gradient(p.rows, 3);
  for (std::size_t r = 0; r < p.rows; ++r) {
    const Vec3 q(static_cast<double>(p(r, 0)), static_cast<double>(p(r, 1)), static_cast<double>(p(r, 2)));
    const TrilinearSample s = sample_trilinear(grid, q);
    values(r, 0) = static_cast<T>(s.value);
    for (std::size_t a = 0; a < 3; ++a) gradient(r, a) = static_cast<T>(s.gradient[static_cast<Eigen::Index>(a)]);
  }
  return ad::gather(points, std::move(values), std::move(gradient));
}

template ad::Var<float> sample_trilinear<float>(const Grid3&, ad::Var<float>);
template ad::Var<double> sample_trilinear<double>(const Grid3&, ad::Var<double>);

double GrowthPattern::radius_at(double t) const {
  double r = 0.0;
  switch (kind) {
    case GrowthKind::linear:
      r = base_radius_mm * (1.0 + parameter * t);
      break;
    case GrowthKind::exponential:
      r = base_radius_mm * std::exp(parameter * t);
      break;
    case GrowthKind::periodic: {
      // Reduce the phase first so t = 0 and t = 1 give the identical radius.
      double phase = std::fmod(t, 1.0);
      if (phase < 0.0) phase += 1.0;
      r = base_radius_mm + parameter * std::sin(2.0 * std::numbers::pi * phase);
      break;
    }
  }
  if (!(r > 0.0) || !std::isfinite(r)) {
    throw ContractError("radius_at: non-positive radius " + std::to_string(r) + " at t=" + std::to_string(t));
  }
  return r;
}

double radius_at(const GrowthPattern& pattern, double t) { return pattern.radius_at(t); }

}  // namespace perimotion
