#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "exosim/limb_dynamics.hpp"
#include "exosim/terrain.hpp"

namespace exosim::sim {

/// Shape knobs for the parametric gait generator. The sand preset has a
/// flatter stance flexion and a larger swing flexion than solid ground.
struct GaitShape {
  double stride_period = 1.1;      // s
  double thigh_amplitude = 22.0;   // deg, swing excursion
  double thigh_offset = 7.0;       // deg, stance baseline
  double stance_flexion = 8.0;     // deg, stance knee bump
  double stance_bump_center = 0.28; // phase of the stance knee bump
  double swing_flexion = 62.0;     // deg, swing knee peak
  double base_flexion = 5.0;       // deg, knee angle around heel strike
  double ground_offset = 0.016;    // m, target stance penetration scale
};

GaitShape gait_shape_preset(Terrain terrain);

/// Periodic reference trajectories as truncated Fourier series (up to 5
/// harmonics) of the gait phase, plus the ground plane height and heel
/// strike schedule that go with them.
class ReferenceGait {
 public:
  static constexpr int kHarmonics = 5;

  ReferenceGait(const limb::LimbParams& params, const GaitShape& shape);

  /// [theta_t, theta_k] in radians at phase s (any real, wraps).
  Eigen::Vector2d q(double s) const;
  /// Time derivative of q at phase s, rad/s (chain rule through s = t/T).
  Eigen::Vector2d qdot(double s) const;

  double phase(double t) const;  // s(t) in [0,1)
  double stride_period() const { return shape_.stride_period; }
  double ground_height() const { return ground_height_; }
  const GaitShape& shape() const { return shape_; }

  /// Heel strikes at t = k T covering [0, t_end].
  std::vector<double> heel_strikes(double t_end) const;

 private:
  struct Series {
    double a0 = 0.0;
    std::array<double, kHarmonics> cos{};
    std::array<double, kHarmonics> sin{};
    double eval(double s) const;
    double deriv(double s) const;  // d/ds
  };

  GaitShape shape_;
  Series thigh_;  // deg
  Series knee_;   // deg
  double ground_height_ = 0.0;
};

}  // namespace exosim::sim
