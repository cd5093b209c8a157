#pragma once

#include <Eigen/Dense>

#include "exosim/errors.hpp"

namespace exosim::limb {

using Eigen::Matrix2d;
using Eigen::Vector2d;

/// Physical constants of the two-link sagittal stance leg. Link 1 is the
/// thigh pivoting at the hip, link 2 lumps shank and foot, pivoting at the
/// knee. COM offsets are measured from the proximal joint along the segment.
struct LimbParams {
  double thigh_mass = 7.0;         // kg
  double shank_mass = 4.3;         // kg, shank + foot lumped
  double thigh_length = 0.42;      // m
  double shank_length = 0.42;      // m
  double thigh_com_offset = 0.18;  // m, hip -> thigh COM
  double shank_com_offset = 0.23;  // m, knee -> lumped COM
  double thigh_inertia = 0.13;     // kg m^2, about COM
  double shank_inertia = 0.07;     // kg m^2, about COM
  double gravity = 9.81;           // m/s^2
  double body_mass = 70.0;         // kg, for GRF normalization

  void validate() const;
};

/// Generalized coordinates: q = [theta_t, theta_k].
/// theta_t is the thigh angle from the downward vertical, positive swinging
/// the knee forward (+x). theta_k is relative knee flexion, positive, with
/// theta_k = 0 at full extension. The shank's absolute angle from vertical
/// is theta_t - theta_k.
struct JointState {
  Vector2d q = Vector2d::Zero();      // rad
  Vector2d qdot = Vector2d::Zero();   // rad/s

  void validate() const;
};

struct DynTerms {
  Matrix2d mass_matrix;      // M(q), symmetric positive definite
  Matrix2d coriolis_matrix;  // C(q, qdot), with Mdot - 2C skew-symmetric
  Vector2d gravity_vector;   // G(q)
};

/// Ground reaction force at the ankle point, world frame: +x forward,
/// +z up.
struct GroundForce {
  double fx = 0.0;  // N
  double fz = 0.0;  // N
  Vector2d vec() const { return {fx, fz}; }
};

DynTerms compute_dynamics_terms(const LimbParams& p, const JointState& s);

/// Ankle-point forward kinematics and its Jacobian (world x,z per joint).
Vector2d ankle_position(const LimbParams& p, const Vector2d& q);
Vector2d ankle_velocity(const LimbParams& p, const JointState& s);
Matrix2d foot_jacobian(const LimbParams& p, const Vector2d& q);

/// det J = l1 l2 sin(theta_k); the chain is singular at full extension.
bool jacobian_singular(const LimbParams& p, const Vector2d& q,
                       double sin_tol = 1e-6);

/// qddot = M^-1 (tau_e + tau_h + J^T F_ext - C qdot - G).
/// Torque vectors must be knee-only, shape [0, tau].
Vector2d forward_dynamics(const LimbParams& p, const JointState& s,
                          const Vector2d& tau_e, const Vector2d& tau_h,
                          const GroundForce& f_ext);

/// Inverse GRF oracle: F_ext = J^-T (M qddot + C qdot + G - tau_e - tau_h).
/// Throws SingularityError near full extension.
GroundForce grf_inverse(const LimbParams& p, const JointState& s,
                        const Vector2d& qddot, const Vector2d& tau_e,
                        const Vector2d& tau_h);

enum class Integrator { SemiImplicitEuler, ExplicitEuler };

/// One fixed time step. Semi-implicit Euler by default:
/// qdot' = qdot + dt qddot, q' = q + dt qdot'. The explicit variant
/// (q' = q + dt qdot) is the scheme the torque planner rolls out with.
JointState step(const LimbParams& p, const JointState& s, const Vector2d& tau_e,
                const Vector2d& tau_h, const GroundForce& f_ext, double dt,
                Integrator scheme = Integrator::SemiImplicitEuler);

/// Kinetic + potential energy, zero at rest in the hanging configuration
/// q = [0, 0].
double mechanical_energy(const LimbParams& p, const JointState& s);

}  // namespace exosim::limb
