#include "exosim/mpc_assist.hpp"

#include <cmath>

namespace exosim::mpc {

namespace {

constexpr double kGradTol = 1e-6;
constexpr double kCostDecreaseTol = 1e-10;

double clampu(double u, double limit) { return std::clamp(u, -limit, limit); }

double norm_violation(double x, double lo, double hi) {
  if (x < lo) return lo - x;
  if (x > hi) return x - hi;
  return 0.0;
}

// d/dv of violation(||v||)^2, zero inside the band.
Vector2d norm_violation_grad(const Vector2d& v, double lo, double hi) {
  const double n = v.norm();
  if (n < 1e-12) return Vector2d::Zero();
  if (n > hi) return 2.0 * (n - hi) / n * v;
  if (n < lo) return -2.0 * (lo - n) / n * v;
  return Vector2d::Zero();
}

// Frozen per-step dynamics terms along the nominal profile.
struct StepTerms {
  Matrix2d m_inv;
  Matrix2d coriolis;
  Vector2d gravity;
  Vector2d rhs_const;  // M^-1 (tau_h + tau_ext - G), torque-independent part
  Vector2d b_u;        // M^-1 e2, knee-torque input direction
};

std::vector<StepTerms> step_terms(const MpcProblem& prob, const MpcConfig& cfg) {
  const int H = cfg.horizon;
  std::vector<StepTerms> terms(static_cast<std::size_t>(H) + 1);
  for (int i = 0; i <= H; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const limb::DynTerms dyn =
        limb::compute_dynamics_terms(prob.params, prob.nominal[k]);
    StepTerms& t = terms[k];
    t.m_inv = dyn.mass_matrix.inverse();
    t.coriolis = dyn.coriolis_matrix;
    t.gravity = dyn.gravity_vector;
    t.rhs_const = t.m_inv * (Vector2d(0.0, prob.tau_h_hat[k]) +
                             prob.tau_ext_hat[k] - dyn.gravity_vector);
    t.b_u = t.m_inv * Vector2d(0.0, 1.0);
  }
  return terms;
}

Vector2d accel_at(const MpcProblem& prob, const StepTerms& t, int i,
                  const limb::JointState& s, double u) {
  const auto k = static_cast<std::size_t>(i);
  double tau_corr = 0.0;
  if (prob.human_kp != 0.0 || prob.human_kd != 0.0) {
    tau_corr = prob.human_kp * (prob.q_ref[k][1] - s.q[1]) +
               prob.human_kd * (prob.qdot_ref[k][1] - s.qdot[1]);
  }
  return t.rhs_const + t.b_u * (u + tau_corr) - t.m_inv * (t.coriolis * s.qdot);
}

}  // namespace

void MpcConfig::validate() const {
  if (horizon < 1) throw std::domain_error("MpcConfig: horizon < 1");
  if (!(dt > 0.0)) throw std::domain_error("MpcConfig: dt must be positive");
  if (w1 < 0 || w2 < 0 || w3 < 0 || alpha < 0 || penalty_weight < 0) {
    throw std::domain_error("MpcConfig: negative weight");
  }
  if (!(tau_limit > 0.0)) throw std::domain_error("MpcConfig: tau_limit <= 0");
  auto ordered = [](double lo, double hi) { return lo < hi; };
  if (!ordered(q_norm_min, q_norm_max) || !ordered(qdot_norm_min, qdot_norm_max) ||
      !ordered(qddot_norm_min, qddot_norm_max)) {
    throw std::domain_error("MpcConfig: bounds must satisfy min < max");
  }
}

void MpcProblem::validate(const MpcConfig& cfg) const {
  const std::size_t n = static_cast<std::size_t>(cfg.horizon) + 1;
  if (qdot_ref.size() != n || tau_h_hat.size() != n || tau_ext_hat.size() != n ||
      tau_e_desired.size() != n || nominal.size() != n) {
    throw std::invalid_argument("MpcProblem: sequence lengths must be H+1");
  }
  if ((human_kp != 0.0 || human_kd != 0.0) && q_ref.size() != n) {
    throw std::invalid_argument(
        "MpcProblem: q_ref must be H+1 when the human response model is on");
  }
  initial.validate();
  for (const auto& s : nominal) s.validate();
}

double desired_assist_torque(double tau_h_hat, double alpha) {
  if (alpha < 0.0) throw std::domain_error("alpha must be >= 0");
  return alpha * tau_h_hat;
}

RolloutResult rollout(const MpcProblem& prob, const std::vector<double>& tau_e,
                      const MpcConfig& cfg) {
  const int H = cfg.horizon;
  if (tau_e.size() != static_cast<std::size_t>(H) + 1) {
    throw std::invalid_argument("rollout: plan length must be H+1");
  }
  const auto terms = step_terms(prob, cfg);

  RolloutResult res;
  res.states.resize(static_cast<std::size_t>(H) + 1);
  res.qddot.resize(static_cast<std::size_t>(H) + 1);
  res.states[0] = prob.initial;
  for (int i = 0; i <= H; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto& s = res.states[k];
    if (!s.q.allFinite() || !s.qdot.allFinite() ||
        s.qdot.cwiseAbs().maxCoeff() > 1e3) {
      res.diverged = true;
      res.diverge_step = i;
      res.states.resize(k + 1);
      res.qddot.resize(k);
      return res;
    }
    res.qddot[k] = accel_at(prob, terms[k], i, s, tau_e[k]);
    if (i < H) {
      limb::JointState next;
      next.q = s.q + cfg.dt * s.qdot;
      next.qdot = s.qdot + cfg.dt * res.qddot[k];
      res.states[k + 1] = next;
    }
  }
  return res;
}

double cost(const MpcProblem& prob, const std::vector<double>& tau_e,
            const RolloutResult& roll, const MpcConfig& cfg,
            CostBreakdown* breakdown) {
  const int H = cfg.horizon;
  if (roll.diverged) return std::numeric_limits<double>::infinity();
  CostBreakdown b;
  for (int i = 0; i <= H; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto& s = roll.states[k];
    b.tracking += cfg.w1 * (prob.qdot_ref[k] - s.qdot).squaredNorm();
    const double vq = norm_violation(s.q.norm(), cfg.q_norm_min, cfg.q_norm_max);
    const double vv =
        norm_violation(s.qdot.norm(), cfg.qdot_norm_min, cfg.qdot_norm_max);
    const double va =
        norm_violation(roll.qddot[k].norm(), cfg.qddot_norm_min, cfg.qddot_norm_max);
    b.penalty += cfg.penalty_weight * (vq * vq + vv * vv + va * va);
  }
  for (int i = 0; i < H; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double du = tau_e[k + 1] - tau_e[k];
    const double dd = prob.tau_e_desired[k + 1] - tau_e[k];
    b.smoothness += cfg.w2 * du * du;
    b.desired_dev += cfg.w3 * dd * dd;
  }
  if (breakdown) *breakdown = b;
  return b.total();
}

VectorXd cost_gradient(const MpcProblem& prob, const std::vector<double>& tau_e,
                       const MpcConfig& cfg) {
  const int H = cfg.horizon;
  const RolloutResult roll = rollout(prob, tau_e, cfg);
  if (roll.diverged) {
    throw DivergenceError("cost_gradient: rollout diverged at step " +
                          std::to_string(roll.diverge_step));
  }
  const auto terms = step_terms(prob, cfg);

  VectorXd grad = VectorXd::Zero(H + 1);

  // Per-step Jacobians of the acceleration: the base LTV part plus the
  // human-response feedback on the knee channel.
  auto da_dq = [&](int i) -> Matrix2d {
    Matrix2d m = Matrix2d::Zero();
    if (prob.human_kp != 0.0) {
      m.col(1) = -prob.human_kp * terms[static_cast<std::size_t>(i)].b_u;
    }
    return m;
  };
  auto da_dv = [&](int i) -> Matrix2d {
    const auto k = static_cast<std::size_t>(i);
    Matrix2d m = -terms[k].m_inv * terms[k].coriolis;
    if (prob.human_kd != 0.0) m.col(1) += -prob.human_kd * terms[k].b_u;
    return m;
  };

  // Direct stage-cost gradients; acceleration penalties route through
  // a_i(q_i, qdot_i, u_i).
  auto accel_pen_grad = [&](int i) -> Vector2d {
    const auto k = static_cast<std::size_t>(i);
    return cfg.penalty_weight * norm_violation_grad(roll.qddot[k],
                                                    cfg.qddot_norm_min,
                                                    cfg.qddot_norm_max);
  };
  auto direct_q = [&](int i) -> Vector2d {
    const auto& s = roll.states[static_cast<std::size_t>(i)];
    Vector2d g = cfg.penalty_weight *
                 norm_violation_grad(s.q, cfg.q_norm_min, cfg.q_norm_max);
    g += da_dq(i).transpose() * accel_pen_grad(i);
    return g;
  };
  auto direct_v = [&](int i) -> Vector2d {
    const auto k = static_cast<std::size_t>(i);
    const auto& s = roll.states[k];
    Vector2d g = -2.0 * cfg.w1 * (prob.qdot_ref[k] - s.qdot);
    g += cfg.penalty_weight *
         norm_violation_grad(s.qdot, cfg.qdot_norm_min, cfg.qdot_norm_max);
    g += da_dv(i).transpose() * accel_pen_grad(i);
    return g;
  };
  auto direct_u = [&](int i) -> double {
    return terms[static_cast<std::size_t>(i)].b_u.dot(accel_pen_grad(i));
  };

  // Plan-only terms.
  for (int i = 0; i < H; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double du = tau_e[k + 1] - tau_e[k];
    const double dd = prob.tau_e_desired[k + 1] - tau_e[k];
    grad[i] += -2.0 * cfg.w2 * du - 2.0 * cfg.w3 * dd;
    grad[i + 1] += 2.0 * cfg.w2 * du;
  }

  // Adjoint sweep through the linear time-varying prediction.
  Vector2d lq = direct_q(H);
  Vector2d lv = direct_v(H);
  grad[H] += direct_u(H);
  for (int i = H - 1; i >= 0; --i) {
    const auto k = static_cast<std::size_t>(i);
    const Matrix2d dv_dv = Matrix2d::Identity() + cfg.dt * da_dv(i);
    grad[i] += cfg.dt * terms[k].b_u.dot(lv) + direct_u(i);
    const Vector2d lq_new = lq + cfg.dt * da_dq(i).transpose() * lv + direct_q(i);
    const Vector2d lv_new =
        cfg.dt * lq + dv_dv.transpose() * lv + direct_v(i);
    lq = lq_new;
    lv = lv_new;
  }
  return grad;
}

TorquePlan solve(const MpcProblem& prob, const MpcConfig& cfg,
                 const std::vector<double>* warm_start) {
  cfg.validate();
  prob.validate(cfg);
  const int H = cfg.horizon;
  const std::size_t n = static_cast<std::size_t>(H) + 1;

  std::vector<double> u(n);
  if (warm_start && warm_start->size() == n) {
    for (std::size_t i = 0; i < n; ++i) u[i] = clampu((*warm_start)[i], cfg.tau_limit);
  } else {
    // Cold start at the clamped desired-torque sequence, which is already
    // the exact optimum when tracking and smoothness are switched off.
    for (std::size_t i = 0; i < n; ++i) {
      u[i] = clampu(prob.tau_e_desired[std::min(i + 1, n - 1)], cfg.tau_limit);
    }
  }

  RolloutResult roll = rollout(prob, u, cfg);
  if (roll.diverged) {
    throw DivergenceError("mpc::solve: infeasible rollout at initialization, step " +
                          std::to_string(roll.diverge_step));
  }
  double fcur = cost(prob, u, roll, cfg);

  TorquePlan plan;
  plan.converged = false;
  plan.cost_trace.push_back(fcur);
  double step_size = 1.0 / (1.0 + cfg.w2 + cfg.w3);
  int iter = 0;
  for (; iter < cfg.max_iters; ++iter) {
    const VectorXd g = cost_gradient(prob, u, cfg);

    // Projected gradient norm: components pushing past an active clamp do
    // not count.
    double pg2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double gi = g[static_cast<Eigen::Index>(i)];
      if (u[i] <= -cfg.tau_limit && gi > 0) gi = 0;
      if (u[i] >= cfg.tau_limit && gi < 0) gi = 0;
      pg2 += gi * gi;
    }
    if (std::sqrt(pg2) < kGradTol) {
      plan.converged = true;
      break;
    }

    // Backtracking line search on the projected step; cost is monotone.
    bool accepted = false;
    double decrease = 0.0;
    double step = step_size * 2.0;
    for (int ls = 0; ls < 40; ++ls) {
      std::vector<double> utry(n);
      for (std::size_t i = 0; i < n; ++i) {
        utry[i] = clampu(u[i] - step * g[static_cast<Eigen::Index>(i)], cfg.tau_limit);
      }
      const RolloutResult rtry = rollout(prob, utry, cfg);
      const double ftry = cost(prob, utry, rtry, cfg);
      if (ftry < fcur) {
        decrease = fcur - ftry;
        u = std::move(utry);
        fcur = ftry;
        step_size = step;
        accepted = true;
        plan.cost_trace.push_back(fcur);
        break;
      }
      step *= 0.5;
    }
    if (!accepted || decrease < kCostDecreaseTol) {
      plan.converged = true;
      if (accepted) ++iter;
      break;
    }
  }

  plan.tau_e = u;
  roll = rollout(prob, u, cfg);
  plan.cost = cost(prob, u, roll, cfg, &plan.breakdown);
  plan.iterations = iter;
  return plan;
}

double RecedingHorizonController::step(const Measurements& m) {
  const std::size_t n = static_cast<std::size_t>(cfg_.horizon) + 1;
  if (m.tau_h_hat.empty()) {
    throw std::invalid_argument("controller: tau_h_hat sequence empty");
  }
  const double tau_d = desired_assist_torque(m.tau_h_hat.front(), cfg_.alpha);

  if (!solver_enabled_ || !m.estimator_ok) {
    degraded_ = !m.estimator_ok;
    last_plan_.reset();
    return clampu(tau_d, cfg_.tau_limit);
  }
  degraded_ = false;

  if (m.tau_h_hat.size() != n || m.f_ext_hat.size() != n) {
    throw std::invalid_argument("controller: estimate sequences must be H+1");
  }

  MpcProblem prob;
  prob.params = params_;
  prob.initial = m.state;
  prob.qdot_ref = m.qdot_ref;
  prob.q_ref = m.q_ref.empty() ? m.qdot_ref : m.q_ref;
  prob.tau_h_hat = m.tau_h_hat;
  prob.human_kp = human_kp_;
  prob.human_kd = human_kd_;

  // Matrix evaluation profile: the measured state now, the reference ahead.
  prob.nominal.resize(n);
  prob.nominal[0] = m.state;
  for (std::size_t i = 1; i < n; ++i) {
    prob.nominal[i].q = prob.q_ref[i];
    prob.nominal[i].qdot = m.qdot_ref[i];
  }

  prob.tau_ext_hat.resize(n);
  prob.tau_e_desired.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix2d J = limb::foot_jacobian(params_, prob.nominal[i].q);
    prob.tau_ext_hat[i] = J.transpose() * m.f_ext_hat[i].vec();
    prob.tau_e_desired[i] = desired_assist_torque(m.tau_h_hat[i], cfg_.alpha);
  }

  std::vector<double> warm;
  const std::vector<double>* warm_ptr = nullptr;
  if (warm_ && warm_->size() == n) {
    warm.assign(warm_->begin() + 1, warm_->end());
    warm.push_back(warm_->back());
    warm_ptr = &warm;
  }

  try {
    const TorquePlan plan = solve(prob, cfg_, warm_ptr);
    warm_ = plan.tau_e;
    last_plan_ = plan;
    return plan.tau_e.front();
  } catch (const DivergenceError&) {
    // Even the initial candidate plan cannot be rolled out; apply the
    // desired torque for this tick and restart cold next time.
    degraded_ = true;
    warm_.reset();
    last_plan_.reset();
    return clampu(tau_d, cfg_.tau_limit);
  }
}

}  // namespace exosim::mpc
