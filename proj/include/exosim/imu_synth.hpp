#pragma once

#include <Eigen/Dense>
#include <array>

#include "exosim/limb_dynamics.hpp"
#include "exosim/util.hpp"

namespace exosim::sim {

/// Rigid IMU attachment on the shank segment: offset along the segment axis
/// from the knee, perpendicular offset, and mount rotation of the sensor
/// frame relative to the segment.
struct ImuMount {
  double along = 0.0;   // m, knee -> sensor along the shank axis
  double out = 0.0;     // m, perpendicular (forward positive)
  double mount = 0.0;   // rad, sensor frame rotation vs segment frame
};

/// Sensor set used throughout: shank mid-segment, heel and toe lumped onto
/// the distal shank (the model has no foot segment), foot sensors mounted
/// flat (rotated 90 degrees).
inline std::array<ImuMount, 3> imu_mounts(const limb::LimbParams& p) {
  return {ImuMount{0.5 * p.shank_length, 0.03, 0.0},
          ImuMount{p.shank_length, -0.04, 0.5 * kPi},
          ImuMount{p.shank_length, 0.12, 0.5 * kPi}};
}

/// Ideal 9-channel reading ({shank,heel,toe} x {ax, az, gy}): proper
/// acceleration of each mount point resolved in its sensor frame, plus the
/// segment angular rate. Closed-form rigid-body kinematics of link 2.
inline Eigen::Matrix<double, 9, 1> imu_channels(const limb::LimbParams& p,
                                                const limb::JointState& s,
                                                const Eigen::Vector2d& qddot) {
  const double th = s.q[0], wt = s.qdot[0], at = qddot[0];
  const double phi = s.q[0] - s.q[1];          // shank absolute angle
  const double wp = s.qdot[0] - s.qdot[1];     // shank angular rate
  const double ap = qddot[0] - qddot[1];

  // Knee point acceleration.
  const double l1 = p.thigh_length;
  const Eigen::Vector2d knee_acc(l1 * (std::cos(th) * at - std::sin(th) * wt * wt),
                                 l1 * (std::sin(th) * at + std::cos(th) * wt * wt));

  const Eigen::Vector2d u(std::sin(phi), -std::cos(phi));   // along shank
  const Eigen::Vector2d nrm(std::cos(phi), std::sin(phi));  // forward normal
  const Eigen::Vector2d g_vec(0.0, -p.gravity);

  Eigen::Matrix<double, 9, 1> out;
  const auto mounts = imu_mounts(p);
  for (int k = 0; k < 3; ++k) {
    const auto& m = mounts[static_cast<std::size_t>(k)];
    // r = d u + h n; rdd = d(-u wp^2 + n ap) + h(-n wp^2 - u ap)
    const Eigen::Vector2d r_acc = m.along * (-u * wp * wp + nrm * ap) +
                                  m.out * (-nrm * wp * wp - u * ap);
    const Eigen::Vector2d proper = knee_acc + r_acc - g_vec;
    const double c = std::cos(m.mount), sn = std::sin(m.mount);
    const Eigen::Vector2d x_axis = c * u + sn * nrm;
    const Eigen::Vector2d z_axis = -sn * u + c * nrm;
    out[3 * k + 0] = proper.dot(x_axis);
    out[3 * k + 1] = proper.dot(z_axis);
    out[3 * k + 2] = wp;
  }
  return out;
}

}  // namespace exosim::sim
