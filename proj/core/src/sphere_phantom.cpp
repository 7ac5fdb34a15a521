#include <algorithm>
#include <cmath>
#include <string>

#include "perimotion/errors.hpp"
#include "perimotion/volume.hpp"

namespace perimotion {

SphereSeries make_sphere_series(const GrowthPattern& pattern, const GridSpec& grid, std::size_t frames,
                                double edge_width_mm, int icosphere_subdivisions) {
  if (frames < 2) throw ContractError("make_sphere_series: need at least 2 frames");
  if (!(edge_width_mm > 0.0)) throw ContractError("make_sphere_series: edge width must be positive");
  if (grid.shape[0] < 2 || grid.shape[1] < 2 || grid.shape[2] < 2) {
    throw ContractError("make_sphere_series: grid must have at least 2 voxels per axis");
  }
  if (!(grid.spacing_mm.array() > 0.0).all()) throw ContractError("make_sphere_series: spacing must be positive");

  SphereSeries series;
  Volume4D& v = series.volume;
  v.shape = grid.shape;
  v.spacing_mm = grid.spacing_mm;
  Vec3 extent;
  for (int a = 0; a < 3; ++a) extent[a] = static_cast<double>(grid.shape[static_cast<std::size_t>(a)] - 1) * grid.spacing_mm[a];
  v.origin_mm = -0.5 * extent;
  v.frame_times = uniform_frame_times(frames);
  series.center_mm = Vec3::Zero();

  std::vector<double> radii;
  radii.reserve(frames);
  for (double t : v.frame_times) radii.push_back(pattern.radius_at(t));
  const double max_radius = *std::max_element(radii.begin(), radii.end());
  const double half_min = 0.5 * extent.minCoeff();
  if (max_radius + 0.5 * edge_width_mm > half_min) {
    throw ContractError("make_sphere_series: sphere of radius " + std::to_string(max_radius) +
                        " mm (plus edge ramp) exceeds the grid half-extent " + std::to_string(half_min) + " mm");
  }

  // Distance of every voxel centre from the sphere centre, computed once.
  Grid3 distance(grid.shape);
  for (std::size_t k = 0; k < grid.shape[2]; ++k) {
    for (std::size_t j = 0; j < grid.shape[1]; ++j) {
      for (std::size_t i = 0; i < grid.shape[0]; ++i) {
        const Vec3 p = v.origin_mm + Vec3(static_cast<double>(i), static_cast<double>(j), static_cast<double>(k))
                                         .cwiseProduct(grid.spacing_mm);
        distance.at(i, j, k) = static_cast<float>((p - series.center_mm).norm());
      }
    }
  }

  for (std::size_t f = 0; f < frames; ++f) {
    Grid3 frame(grid.shape);
    const double r = radii[f];
    for (std::size_t n = 0; n < frame.values.size(); ++n) {
      const double occupancy = 0.5 - (static_cast<double>(distance.values[n]) - r) / edge_width_mm;
      frame.values[n] = static_cast<float>(std::clamp(occupancy, 0.0, 1.0));
    }
    v.frames.push_back(std::move(frame));
    series.meshes.push_back(make_icosphere(r, icosphere_subdivisions, series.center_mm));
  }
  v.validate();
  return series;
}

}  // namespace perimotion
