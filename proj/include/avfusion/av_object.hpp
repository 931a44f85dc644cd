#pragma once

#include <Eigen/Core>

#include "avfusion/geometry.hpp"

namespace avfusion {

/// One detected speaker candidate.
struct AVObject {
  ScenePoint position;
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Zero();  // m^2
  double weight = 0.0;         // mixture weight of the component
  bool speaking = false;
  double auditory_mass = 0.0;  // summed auditory responsibilities
};

}  // namespace avfusion
