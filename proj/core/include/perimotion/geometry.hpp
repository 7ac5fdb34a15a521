#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace perimotion {

using Vec3 = Eigen::Vector3d;

}  // namespace perimotion
