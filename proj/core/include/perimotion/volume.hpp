#pragma once

// 4-D image container, coordinate normalization, differentiable trilinear
// sampling, the growing/pulsating sphere phantom and the V4D file format.

#include <array>
#include <concepts>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "perimotion/autodiff.hpp"
#include "perimotion/geometry.hpp"
#include "perimotion/mesh.hpp"

namespace perimotion {

using GridShape = std::array<std::size_t, 3>;  // nx, ny, nz

// Dense scalar grid, x fastest: index = i + nx * (j + ny * k).
struct Grid3 {
  GridShape shape{0, 0, 0};
  std::vector<float> values;

  Grid3() = default;
  explicit Grid3(GridShape s, float fill = 0.0f) : shape(s), values(s[0] * s[1] * s[2], fill) {}

  std::size_t size() const noexcept { return values.size(); }
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return i + shape[0] * (j + shape[1] * k);
  }
  float& at(std::size_t i, std::size_t j, std::size_t k) { return values[index(i, j, k)]; }
  float at(std::size_t i, std::size_t j, std::size_t k) const { return values[index(i, j, k)]; }
};

struct Volume4D {
  GridShape shape{0, 0, 0};
  Vec3 spacing_mm = Vec3::Ones();
  Vec3 origin_mm = Vec3::Zero();  // world position of voxel (0, 0, 0)'s centre
  std::vector<double> frame_times;
  std::vector<Grid3> frames;

  // Frame times are normalized, so the cycle length is always 1.
  static constexpr double period = 1.0;

  std::size_t frame_count() const noexcept { return frames.size(); }

  // Throws ValidationError unless: >= 2 frames, matching shapes, positive
  // spacing, frame_times strictly increasing from exactly 0 to exactly 1.
  void validate() const;
};

// Equally spaced times i / (n - 1); the last one is exactly 1.
std::vector<double> uniform_frame_times(std::size_t n);

// Affine map between world millimetres and [-1, 1]^3. The box spans the
// voxel centres, so voxel (0,0,0) maps to -1 and voxel (n-1,...) to +1.
class DomainNormalizer {
 public:
  DomainNormalizer(const Vec3& world_min, const Vec3& world_max);
  static DomainNormalizer for_volume(const Volume4D& volume);

  Vec3 to_normalized(const Vec3& world) const;
  Vec3 to_world(const Vec3& normalized) const;
  // Millimetres per normalized unit along each axis.
  const Vec3& half_extent() const noexcept { return half_; }
  const Vec3& world_min() const noexcept { return min_; }
  const Vec3& world_max() const noexcept { return max_; }

 private:
  Vec3 min_;
  Vec3 max_;
  Vec3 center_;
  Vec3 half_;
};

struct TrilinearSample {
  double value = 0.0;
  Vec3 gradient = Vec3::Zero();  // d value / d normalized coordinate
};

// Samples at a normalized point. Outside the grid the coordinate is clamped
// to the border and the gradient along clamped axes is zero.
TrilinearSample sample_trilinear(const Grid3& grid, const Vec3& normalized);

// Differentiable variant: points is B x 3, result B x 1.
template <std::floating_point T>
ad::Var<T> sample_trilinear(const Grid3& grid, ad::Var<T> points);

enum class GrowthKind { linear, exponential, periodic };

struct GrowthPattern {
  GrowthKind kind = GrowthKind::periodic;
  double base_radius_mm = 12.0;
  // linear/exponential: rate rho; periodic: amplitude A in mm.
  double parameter = 4.0;

  // linear r0(1 + rho t); exponential r0 e^(rho t); periodic r0 + A sin(2 pi t).
  double radius_at(double t) const;
};

double radius_at(const GrowthPattern& pattern, double t);

struct GridSpec {
  GridShape shape{48, 48, 48};
  Vec3 spacing_mm = Vec3::Ones();
};

struct SphereSeries {
  Volume4D volume;
  std::vector<TriangleMesh> meshes;  // one per frame, world mm
  Vec3 center_mm = Vec3::Zero();
};

// Soft occupancy of a centred sphere per frame (1 inside, 0 outside, linear
// ramp of edge_width_mm across the surface) plus matching icospheres. The
// grid is centred on the world origin.
SphereSeries make_sphere_series(const GrowthPattern& pattern, const GridSpec& grid, std::size_t frames,
                                double edge_width_mm, int icosphere_subdivisions = 4);

// V4D container:
//   8 bytes  "V4DVOL01"
//   u32 LE   header length L
//   L bytes  UTF-8 JSON {shape:[nx,ny,nz], spacing_mm, origin_mm, frame_times, dtype:"f32le"}
//   payload  frames in order, each nx*ny*nz little-endian f32, x fastest
void write_v4d(const Volume4D& volume, std::ostream& out);
void write_v4d(const Volume4D& volume, const std::filesystem::path& path);
Volume4D read_v4d(std::istream& in);
Volume4D read_v4d(const std::filesystem::path& path);

}  // namespace perimotion
