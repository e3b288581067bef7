#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

// Conventions used throughout the library:
//   lengths   cm
//   angles    rad
//   time      gait phase, one cycle = 2*pi phase-rad
//   frames    body frame: +x forward (head direction), +y left, z up;
//             world pose (x, y, theta) places the head axle.
namespace merloco {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat32 = Eigen::Matrix<double, 3, 2>;

// Point in the 2-D shape space of body-wave weights.
struct ShapePoint {
  double w1 = 0.0;
  double w2 = 0.0;

  double norm() const { return std::sqrt(w1 * w1 + w2 * w2); }
};

// Instantaneous body velocity (forward, lateral, rotational) of the head
// frame, per phase-rad. Zero shape velocity implies zero body velocity.
struct BodyVelocity {
  double xi_x = 0.0;      // cm / phase-rad
  double xi_y = 0.0;      // cm / phase-rad
  double xi_theta = 0.0;  // rad / phase-rad

  Vec3 vec() const { return {xi_x, xi_y, xi_theta}; }
};

// Planar pose plus the reference height of the body plane.
struct Pose2 {
  double x = 0.0;
  double y = 0.0;
  double theta = 0.0;
  double z_ref = 0.0;
};

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Quasi-static balance is undefined with an empty stance set.
struct AllFeetAirborne : std::runtime_error {
  AllFeetAirborne() : std::runtime_error("force balance: no feet in stance") {}
};

struct SolverError : std::runtime_error {
  explicit SolverError(const std::string& msg) : std::runtime_error(msg) {}
};

inline double wrap_phase(double phase) {
  const double two_pi = 2.0 * M_PI;
  double p = std::fmod(phase, two_pi);
  if (p < 0.0) p += two_pi;
  return p;
}


}  // namespace merloco
