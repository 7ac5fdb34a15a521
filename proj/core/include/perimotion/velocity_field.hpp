#pragma once

#include <span>

#include "perimotion/geometry.hpp"

namespace perimotion {

// A time-dependent velocity field over normalized coordinates. Implemented by
// the neural model and by analytic fields used in tests and diagnostics.
class VelocityField {
 public:
  virtual ~VelocityField() = default;

  // Writes v(points[i], t) into velocities[i]; both spans have equal length.
  virtual void evaluate(std::span<const Vec3> points, double t, std::span<Vec3> velocities) const = 0;
};

}  // namespace perimotion
