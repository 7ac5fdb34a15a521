#pragma once

// Explicit Euler integration of dx/dt = v(x, t):
//   x_{k+1} = x_k + (t_{k+1} - t_k) * v(x_k, t_k)
// on an explicit time grid. Integrating two adjacent pieces of a grid gives
// bit-identical results to integrating the whole grid at once.

#include <concepts>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "perimotion/autodiff.hpp"
#include "perimotion/geometry.hpp"
#include "perimotion/mesh.hpp"
#include "perimotion/velocity_field.hpp"

namespace perimotion {

class DomainNormalizer;

enum class Direction { forward, backward };

struct IntegratorConfig {
  int steps = 24;
  Direction direction = Direction::forward;
};

// Positions of B points at every grid time, step-major.
struct Trajectory {
  std::size_t point_count = 0;
  std::vector<double> times;     // S + 1 entries
  std::vector<Vec3> positions;   // (S + 1) * B entries

  std::size_t step_count() const noexcept { return times.empty() ? 0 : times.size() - 1; }
  const Vec3& at(std::size_t point, std::size_t step) const { return positions[step * point_count + point]; }
  std::span<const Vec3> step(std::size_t s) const {
    return std::span<const Vec3>(positions).subspan(s * point_count, point_count);
  }
  std::span<const Vec3> final_positions() const { return step(step_count()); }
};

// t_start + (t_end - t_start) * k / steps, with the last entry exactly t_end.
std::vector<double> euler_grid(double t_start, double t_end, int steps);

// Frame times with steps_per_frame uniform sub-steps between each pair; every
// frame time appears exactly, at index i * steps_per_frame.
std::vector<double> frame_grid(std::span<const double> frame_times, int steps_per_frame);

// Integrates over the given grid (strictly monotone, >= 2 entries). Throws
// NumericalError naming the step when a velocity is non-finite.
Trajectory integrate_on_grid(const VelocityField& field, std::span<const Vec3> seeds, std::span<const double> times);

Trajectory integrate(const VelocityField& field, std::span<const Vec3> seeds, double t_start, double t_end,
                     int steps);

// Forward integrates 0 -> t, backward integrates t -> 0, with config.steps steps.
Trajectory integrate(const VelocityField& field, std::span<const Vec3> seeds, double t, const IntegratorConfig& config);

// phi_{t_i}(seeds) for every frame time from one Euler pass whose step
// boundaries include each frame time. Result times equal frame_times.
Trajectory flow_at_frames(const VelocityField& field, std::span<const Vec3> seeds,
                          std::span<const double> frame_times, int steps_per_frame = 1);

// Approximates phi_t^{-1}(targets) by integrating from t back to 0.
std::vector<Vec3> inverse_map(const VelocityField& field, std::span<const Vec3> targets, double t, int steps);

// Advects mesh vertices (world mm) forward from 0 to t; faces are unchanged.
// t == 0 returns the input exactly.
TriangleMesh deform_mesh(const VelocityField& field, const TriangleMesh& mesh, double t, int steps,
                         const DomainNormalizer& normalizer);

// CSV with header point_id,step,t,x,y,z (positions in world mm).
void write_trajectory_csv(const Trajectory& trajectory, const DomainNormalizer& normalizer, std::ostream& out);

[[noreturn]] void throw_bad_grid(const char* where);

// Differentiable Euler integration. `field` is any callable
// (ad::Var<T> points, double t) -> ad::Var<T> velocities, e.g. a FieldGraph.
// Returns the positions at every grid time; entry 0 is `seeds` itself.
template <std::floating_point T, typename GraphField>
std::vector<ad::Var<T>> integrate_graph(const GraphField& field, ad::Var<T> seeds, std::span<const double> times) {
  if (times.size() < 2) throw_bad_grid("integrate_graph");
  std::vector<ad::Var<T>> out;
  out.reserve(times.size());
  out.push_back(seeds);
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const ad::Var<T> velocity = field(out.back(), times[k]);
    const auto h = static_cast<T>(times[k + 1] - times[k]);
    out.push_back(ad::add(out.back(), ad::scale(velocity, h)));
  }
  return out;
}

// Graph positions at each frame time (index i * steps_per_frame of the grid).
template <std::floating_point T, typename GraphField>
std::vector<ad::Var<T>> flow_at_frames_graph(const GraphField& field, ad::Var<T> seeds,
                                             std::span<const double> frame_times, int steps_per_frame = 1) {
  const std::vector<double> grid = frame_grid(frame_times, steps_per_frame);
  const std::vector<ad::Var<T>> all = integrate_graph<T>(field, seeds, grid);
  std::vector<ad::Var<T>> frames;
  frames.reserve(frame_times.size());
  for (std::size_t i = 0; i < frame_times.size(); ++i) {
    frames.push_back(all[i * static_cast<std::size_t>(steps_per_frame)]);
  }
  return frames;
}

}  // namespace perimotion
