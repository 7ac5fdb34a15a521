#include "perimotion/flow.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>
#include <string>

#include "perimotion/errors.hpp"
#include "perimotion/volume.hpp"

namespace perimotion {

void throw_bad_grid(const char* where) {
  throw ContractError(std::string(where) + ": time grid needs at least two strictly monotone entries");
}

std::vector<double> euler_grid(double t_start, double t_end, int steps) {
  if (steps < 1) throw ContractError("euler_grid: steps must be >= 1");
  if (!std::isfinite(t_start) || !std::isfinite(t_end) || t_start == t_end) {
    throw ContractError("euler_grid: need finite, distinct end points");
  }
  std::vector<double> grid(static_cast<std::size_t>(steps) + 1);
  for (int k = 0; k <= steps; ++k) {
    grid[static_cast<std::size_t>(k)] = t_start + (t_end - t_start) * static_cast<double>(k) / static_cast<double>(steps);
  }
  grid.back() = t_end;
  return grid;
}

std::vector<double> frame_grid(std::span<const double> frame_times, int steps_per_frame) {
  if (steps_per_frame < 1) throw ContractError("frame_grid: steps_per_frame must be >= 1");
  if (frame_times.size() < 2) throw ContractError("frame_grid: need at least two frame times");
  for (std::size_t i = 1; i < frame_times.size(); ++i) {
    if (!(frame_times[i] > frame_times[i - 1])) {
      throw ContractError("frame_grid: frame times not increasing at index " + std::to_string(i));
    }
  }
  std::vector<double> grid;
  grid.reserve((frame_times.size() - 1) * static_cast<std::size_t>(steps_per_frame) + 1);
  for (std::size_t i = 0; i + 1 < frame_times.size(); ++i) {
    const double a = frame_times[i];
    const double b = frame_times[i + 1];
    grid.push_back(a);
    for (int j = 1; j < steps_per_frame; ++j) {
      grid.push_back(a + (b - a) * static_cast<double>(j) / static_cast<double>(steps_per_frame));
    }
  }
  grid.push_back(frame_times.back());
  return grid;
}

Trajectory integrate_on_grid(const VelocityField& field, std::span<const Vec3> seeds, std::span<const double> times) {
  if (times.size() < 2) throw_bad_grid("integrate");
  const bool increasing = times[1] > times[0];
  for (std::size_t k = 1; k < times.size(); ++k) {
    if (increasing ? !(times[k] > times[k - 1]) : !(times[k] < times[k - 1])) throw_bad_grid("integrate");
  }
  for (const Vec3& s : seeds) {
    if (!s.allFinite()) throw NumericalError(0, "integrate: non-finite seed position");
  }

  Trajectory traj;
  traj.point_count = seeds.size();
  traj.times.assign(times.begin(), times.end());
  traj.positions.resize(times.size() * seeds.size());
  std::copy(seeds.begin(), seeds.end(), traj.positions.begin());

  std::vector<Vec3> velocity(seeds.size());
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const auto current = std::span<const Vec3>(traj.positions).subspan(k * seeds.size(), seeds.size());
    field.evaluate(current, times[k], velocity);
    const double h = times[k + 1] - times[k];
    Vec3* next = traj.positions.data() + (k + 1) * seeds.size();
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      if (!velocity[i].allFinite()) {
        throw NumericalError(static_cast<std::int64_t>(k),
                             "integrate: non-finite velocity at step " + std::to_string(k) + " (point " +
                                 std::to_string(i) + ")");
      }
      next[i] = current[i] + h * velocity[i];
    }
  }
  return traj;
}

Trajectory integrate(const VelocityField& field, std::span<const Vec3> seeds, double t_start, double t_end,
                     int steps) {
  const std::vector<double> grid = euler_grid(t_start, t_end, steps);
  return integrate_on_grid(field, seeds, grid);
}

Trajectory integrate(const VelocityField& field, std::span<const Vec3> seeds, double t, const IntegratorConfig& config) {
  return config.direction == Direction::forward ? integrate(field, seeds, 0.0, t, config.steps)
                                                : integrate(field, seeds, t, 0.0, config.steps);
}

Trajectory flow_at_frames(const VelocityField& field, std::span<const Vec3> seeds,
                          std::span<const double> frame_times, int steps_per_frame) {
  const std::vector<double> grid = frame_grid(frame_times, steps_per_frame);
  const Trajectory full = integrate_on_grid(field, seeds, grid);
  if (steps_per_frame == 1) return full;
  Trajectory frames;
  frames.point_count = seeds.size();
  frames.times.assign(frame_times.begin(), frame_times.end());
  frames.positions.reserve(frame_times.size() * seeds.size());
  for (std::size_t i = 0; i < frame_times.size(); ++i) {
    const auto s = full.step(i * static_cast<std::size_t>(steps_per_frame));
    frames.positions.insert(frames.positions.end(), s.begin(), s.end());
  }
  return frames;
}

std::vector<Vec3> inverse_map(const VelocityField& field, std::span<const Vec3> targets, double t, int steps) {
  if (t == 0.0) return {targets.begin(), targets.end()};
  const Trajectory back = integrate(field, targets, t, IntegratorConfig{steps, Direction::backward});
  const auto last = back.final_positions();
  return {last.begin(), last.end()};
}

TriangleMesh deform_mesh(const VelocityField& field, const TriangleMesh& mesh, double t, int steps,
                         const DomainNormalizer& normalizer) {
  if (t == 0.0) return mesh;
  std::vector<Vec3> seeds;
  seeds.reserve(mesh.vertices.size());
  for (const Vec3& v : mesh.vertices) seeds.push_back(normalizer.to_normalized(v));
  const Trajectory traj = integrate(field, seeds, 0.0, t, steps);
  TriangleMesh out{{}, mesh.faces};
  out.vertices.reserve(mesh.vertices.size());
  const auto end = traj.final_positions();
  // add the displacement to the original vertex so a still field is exact
  for (std::size_t v = 0; v < seeds.size(); ++v) {
    out.vertices.push_back(mesh.vertices[v] + (end[v] - seeds[v]).cwiseProduct(normalizer.half_extent()));
  }
  return out;
}

void write_trajectory_csv(const Trajectory& trajectory, const DomainNormalizer& normalizer, std::ostream& out) {
  out << "point_id,step,t,x,y,z\n";
  char line[160];
  for (std::size_t p = 0; p < trajectory.point_count; ++p) {
    for (std::size_t s = 0; s <= trajectory.step_count(); ++s) {
      const Vec3 w = normalizer.to_world(trajectory.at(p, s));
      const int n = std::snprintf(line, sizeof(line), "%zu,%zu,%.9g,%.9g,%.9g,%.9g\n", p, s, trajectory.times[s],
                                  w.x(), w.y(), w.z());
      out.write(line, n);
    }
  }
}

}  // namespace perimotion
