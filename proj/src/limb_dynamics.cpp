#include "exosim/limb_dynamics.hpp"

#include <cmath>

#include "exosim/util.hpp"

namespace exosim::limb {

namespace {

bool finite(const Vector2d& v) {
  return std::isfinite(v[0]) && std::isfinite(v[1]);
}

void require_knee_only(const Vector2d& tau, const char* name) {
  if (tau[0] != 0.0) {
    throw std::invalid_argument(std::string(name) +
                                " must be knee-only, shape [0, tau]");
  }
}

}  // namespace

void LimbParams::validate() const {
  auto positive = [](double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::domain_error(std::string("LimbParams: ") + name +
                              " must be positive and finite");
    }
  };
  positive(thigh_mass, "thigh_mass");
  positive(shank_mass, "shank_mass");
  positive(thigh_length, "thigh_length");
  positive(shank_length, "shank_length");
  positive(thigh_inertia, "thigh_inertia");
  positive(shank_inertia, "shank_inertia");
  positive(body_mass, "body_mass");
  if (!(thigh_com_offset > 0.0 && thigh_com_offset <= thigh_length)) {
    throw std::domain_error("LimbParams: thigh_com_offset outside (0, length]");
  }
  if (!(shank_com_offset > 0.0 && shank_com_offset <= shank_length)) {
    throw std::domain_error("LimbParams: shank_com_offset outside (0, length]");
  }
  if (!(body_mass > thigh_mass + shank_mass)) {
    throw std::domain_error("LimbParams: body_mass must exceed leg mass");
  }
  if (!std::isfinite(gravity) || gravity < 0.0) {
    throw std::domain_error("LimbParams: gravity must be finite and >= 0");
  }
}

void JointState::validate() const {
  if (!finite(q) || !finite(qdot)) {
    throw std::domain_error("JointState: non-finite entries");
  }
  if (std::abs(q[1]) > kPi) {
    throw std::domain_error("JointState: |theta_k| exceeds pi");
  }
}

DynTerms compute_dynamics_terms(const LimbParams& p, const JointState& s) {
  s.validate();
  const double m1 = p.thigh_mass, m2 = p.shank_mass;
  const double l1 = p.thigh_length;
  const double c1 = p.thigh_com_offset, c2 = p.shank_com_offset;
  const double qk = s.q[1];
  const double w1 = s.qdot[0], w2 = s.qdot[1];

  // Closed-form Lagrangian terms with the relative knee coordinate.
  // A = m1 c1^2 + I1 + m2 l1^2, B = m2 c2^2 + I2, D = m2 l1 c2 cos(theta_k).
  const double A = m1 * c1 * c1 + p.thigh_inertia + m2 * l1 * l1;
  const double B = m2 * c2 * c2 + p.shank_inertia;
  const double D = m2 * l1 * c2 * std::cos(qk);
  const double Dp = -m2 * l1 * c2 * std::sin(qk);  // dD/dtheta_k

  DynTerms t;
  t.mass_matrix << A + B + 2.0 * D, -(B + D), -(B + D), B;
  t.coriolis_matrix << Dp * w2, Dp * (w1 - w2), -Dp * w1, 0.0;

  const double phi = s.q[0] - qk;  // shank absolute angle
  const double g = p.gravity;
  t.gravity_vector << (m1 * c1 + m2 * l1) * g * std::sin(s.q[0]) +
                          m2 * c2 * g * std::sin(phi),
      -m2 * c2 * g * std::sin(phi);
  return t;
}

Vector2d ankle_position(const LimbParams& p, const Vector2d& q) {
  const double phi = q[0] - q[1];
  return {p.thigh_length * std::sin(q[0]) + p.shank_length * std::sin(phi),
          -p.thigh_length * std::cos(q[0]) - p.shank_length * std::cos(phi)};
}

Vector2d ankle_velocity(const LimbParams& p, const JointState& s) {
  return foot_jacobian(p, s.q) * s.qdot;
}

Matrix2d foot_jacobian(const LimbParams& p, const Vector2d& q) {
  if (!finite(q)) throw std::domain_error("foot_jacobian: non-finite q");
  const double l1 = p.thigh_length, l2 = p.shank_length;
  const double phi = q[0] - q[1];
  Matrix2d J;
  J << l1 * std::cos(q[0]) + l2 * std::cos(phi), -l2 * std::cos(phi),
      l1 * std::sin(q[0]) + l2 * std::sin(phi), -l2 * std::sin(phi);
  return J;
}

bool jacobian_singular(const LimbParams& p, const Vector2d& q, double sin_tol) {
  (void)p;
  return std::abs(std::sin(q[1])) < sin_tol;
}

Vector2d forward_dynamics(const LimbParams& p, const JointState& s,
                          const Vector2d& tau_e, const Vector2d& tau_h,
                          const GroundForce& f_ext) {
  require_knee_only(tau_e, "tau_e");
  require_knee_only(tau_h, "tau_h");
  if (!std::isfinite(f_ext.fx) || !std::isfinite(f_ext.fz)) {
    throw std::domain_error("forward_dynamics: non-finite external force");
  }
  const DynTerms t = compute_dynamics_terms(p, s);
  const Matrix2d J = foot_jacobian(p, s.q);

  Eigen::SelfAdjointEigenSolver<Matrix2d> eig(t.mass_matrix);
  const double lmin = eig.eigenvalues()[0], lmax = eig.eigenvalues()[1];
  if (!(lmin > 0.0) || lmax / lmin > 1e12) {
    throw SingularityError("forward_dynamics: mass matrix ill-conditioned");
  }

  const Vector2d rhs = tau_e + tau_h + J.transpose() * f_ext.vec() -
                       t.coriolis_matrix * s.qdot - t.gravity_vector;
  return t.mass_matrix.ldlt().solve(rhs);
}

GroundForce grf_inverse(const LimbParams& p, const JointState& s,
                        const Vector2d& qddot, const Vector2d& tau_e,
                        const Vector2d& tau_h) {
  require_knee_only(tau_e, "tau_e");
  require_knee_only(tau_h, "tau_h");
  if (!finite(qddot)) throw std::domain_error("grf_inverse: non-finite qddot");
  if (jacobian_singular(p, s.q)) {
    throw SingularityError(
        "grf_inverse: Jacobian singular (leg near full extension)");
  }
  const DynTerms t = compute_dynamics_terms(p, s);
  const Matrix2d J = foot_jacobian(p, s.q);
  const Vector2d tau_ext = t.mass_matrix * qddot + t.coriolis_matrix * s.qdot +
                           t.gravity_vector - tau_e - tau_h;
  const Vector2d f = J.transpose().fullPivLu().solve(tau_ext);
  return {f[0], f[1]};
}

JointState step(const LimbParams& p, const JointState& s, const Vector2d& tau_e,
                const Vector2d& tau_h, const GroundForce& f_ext, double dt,
                Integrator scheme) {
  if (!(dt > 0.0 && dt <= 0.05)) {
    throw std::domain_error("step: dt outside (0, 0.05]");
  }
  const Vector2d qddot = forward_dynamics(p, s, tau_e, tau_h, f_ext);
  JointState next;
  next.qdot = s.qdot + dt * qddot;
  if (scheme == Integrator::SemiImplicitEuler) {
    next.q = s.q + dt * next.qdot;
  } else {
    next.q = s.q + dt * s.qdot;
  }
  if (!finite(next.q) || !finite(next.qdot) ||
      next.qdot.cwiseAbs().maxCoeff() > 1e3) {
    throw DivergenceError("step: state blow-up (|qdot| > 1e3 rad/s)");
  }
  return next;
}

double mechanical_energy(const LimbParams& p, const JointState& s) {
  const double m1 = p.thigh_mass, m2 = p.shank_mass;
  const double l1 = p.thigh_length;
  const double c1 = p.thigh_com_offset, c2 = p.shank_com_offset;
  const double w1 = s.qdot[0], wrel = s.qdot[0] - s.qdot[1];
  const double qk = s.q[1];
  const double phi = s.q[0] - qk;

  const double kinetic =
      0.5 * (m1 * c1 * c1 + p.thigh_inertia) * w1 * w1 +
      0.5 * m2 *
          (l1 * l1 * w1 * w1 + c2 * c2 * wrel * wrel +
           2.0 * l1 * c2 * std::cos(qk) * w1 * wrel) +
      0.5 * p.shank_inertia * wrel * wrel;

  // Potential referenced to the hanging configuration q = [0, 0].
  const double g = p.gravity;
  const double potential = m1 * g * c1 * (1.0 - std::cos(s.q[0])) +
                           m2 * g * (l1 * (1.0 - std::cos(s.q[0])) +
                                     c2 * (1.0 - std::cos(phi)));
  return kinetic + potential;
}

}  // namespace exosim::limb
