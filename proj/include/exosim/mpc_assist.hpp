#pragma once

#include <Eigen/Dense>
#include <optional>
#include <vector>

#include "exosim/limb_dynamics.hpp"

namespace exosim::mpc {

using Eigen::Matrix2d;
using Eigen::Vector2d;
using Eigen::VectorXd;

struct MpcConfig {
  int horizon = 50;    // H; the plan carries H+1 torques, indices 0..H
  double dt = 0.04;    // s
  double w1 = 1.0;     // velocity tracking
  double w2 = 0.15;    // torque smoothness
  double w3 = 0.5;     // deviation from the desired assist torque
  double alpha = 0.3;  // assistance scale
  double tau_limit = 15.0;        // N*m hard actuator clamp
  double penalty_weight = 1000.0; // soft weight on the norm bounds
  int max_iters = 200;

  // Euclidean-norm bounds on q, qdot and qddot along the rollout.
  double q_norm_min = 0.0, q_norm_max = 3.0;
  double qdot_norm_min = 0.0, qdot_norm_max = 25.0;
  double qddot_norm_min = 0.0, qddot_norm_max = 800.0;

  void validate() const;
};

/// One receding-horizon instance. Reference and estimate sequences span
/// indices 0..H; the torque estimates enter the dynamics at steps 0..H-1
/// and are typically a zero-order hold of the current estimates.
struct MpcProblem {
  limb::LimbParams params;
  limb::JointState initial;
  std::vector<Vector2d> qdot_ref;     // length H+1
  std::vector<Vector2d> q_ref;        // length H+1, reporting only
  std::vector<double> tau_h_hat;      // knee component, length H+1
  std::vector<Vector2d> tau_ext_hat;  // J^T F_hat, length H+1
  std::vector<double> tau_e_desired;  // alpha * tau_h_hat, length H+1

  // States the dynamics matrices are evaluated at, per horizon index. The
  // discrete prediction drops the matrices' dependence on the predicted
  // state, so M_i, C_i, G_i come from this known time profile (measured
  // state now, reference states ahead) and the rollout stays linear in the
  // decision variables.
  std::vector<limb::JointState> nominal;  // length H+1

  // Predicted corrective response of the human around the reference,
  // knee channel: tau_h_hat[i] is augmented by
  //   human_kp (q_ref_k(i) - q_k(i)) + human_kd (qdot_ref_k(i) - qdot_k(i)).
  // Zero gains reduce the prediction to the plain held-estimate dynamics.
  // Gains must stay soft enough for the forward-Euler step (roughly
  // kp < 2 / (dt^2 ||M^-1||), kd < 2 / (dt ||M^-1||)).
  double human_kp = 0.0;  // N*m/rad
  double human_kd = 0.0;  // N*m*s/rad

  void validate(const MpcConfig& cfg) const;
};

struct CostBreakdown {
  double tracking = 0.0;
  double smoothness = 0.0;
  double desired_dev = 0.0;
  double penalty = 0.0;
  double total() const { return tracking + smoothness + desired_dev + penalty; }
};

struct TorquePlan {
  std::vector<double> tau_e;  // length H+1, each within [-tau_limit, tau_limit]
  double cost = 0.0;
  CostBreakdown breakdown;
  int iterations = 0;
  bool converged = false;
  std::vector<double> cost_trace;  // accepted cost after each iteration
};

struct RolloutResult {
  std::vector<limb::JointState> states;  // length H+1
  std::vector<Vector2d> qddot;           // length H+1; [H] evaluated at the
                                         // terminal state for the bound check
  bool diverged = false;
  int diverge_step = -1;
};

/// tau_e^d = alpha * tau_h_hat.
double desired_assist_torque(double tau_h_hat, double alpha);

/// Forward-Euler prediction: q(i+1) = q(i) + dt qdot(i),
/// qdot(i+1) = qdot(i) + dt M_i^-1 [tau_e + tau_h + tau_ext - C_i qdot - G_i],
/// with the matrices re-evaluated at every step's state.
RolloutResult rollout(const MpcProblem& prob, const std::vector<double>& tau_e,
                      const MpcConfig& cfg);

/// Stage cost summed over the horizon: w1 ||qdot_ref - qdot||^2 per index
/// 0..H, w2 (tau_e(i+1)-tau_e(i))^2 and w3 (tau_e^d(i+1)-tau_e(i))^2 per
/// index 0..H-1 (the out-of-plan terminal differences are dropped), plus
/// quadratic penalties on norm-bound violations.
double cost(const MpcProblem& prob, const std::vector<double>& tau_e,
            const RolloutResult& roll, const MpcConfig& cfg,
            CostBreakdown* breakdown = nullptr);

/// Exact gradient of cost() w.r.t. the torque plan, by reverse accumulation
/// through the rollout.
VectorXd cost_gradient(const MpcProblem& prob, const std::vector<double>& tau_e,
                       const MpcConfig& cfg);

/// Projected-gradient descent with a monotone backtracking line search and
/// hard clamping to |tau_e| <= tau_limit. Deterministic; warm_start (when
/// given) seeds the iterate, otherwise the plan starts from the clamped
/// desired-torque sequence.
TorquePlan solve(const MpcProblem& prob, const MpcConfig& cfg,
                 const std::vector<double>* warm_start = nullptr);

/// Per-step controller: builds the receding-horizon problem from fresh
/// measurements, solves, applies the first torque and keeps the shifted plan
/// as the next warm start. When the solver is disabled or the force
/// estimate is unavailable it degrades to the clamped desired torque
/// (the baseline stiffness controller).
class RecedingHorizonController {
 public:
  struct Measurements {
    limb::JointState state;
    // Estimate sequences over the horizon (length H+1). Index 0 is the
    // fresh estimate; later entries typically come from the caller's
    // phase-indexed profiles of recent estimates (a periodic-gait
    // prediction), or repeat index 0 for a plain hold.
    std::vector<double> tau_h_hat;        // N*m, generalized convention
    std::vector<limb::GroundForce> f_ext_hat;  // N
    std::vector<Vector2d> qdot_ref;       // length H+1
    std::vector<Vector2d> q_ref;          // length H+1 (reporting)
    bool estimator_ok = true;
  };

  RecedingHorizonController(const limb::LimbParams& params, const MpcConfig& cfg,
                            bool solver_enabled = true, double human_kp = 0.0,
                            double human_kd = 0.0)
      : params_(params),
        cfg_(cfg),
        solver_enabled_(solver_enabled),
        human_kp_(human_kp),
        human_kd_(human_kd) {
    cfg_.validate();
  }

  double step(const Measurements& m);
  void reset_warm_start() { warm_.reset(); }
  bool last_step_degraded() const { return degraded_; }
  const std::optional<TorquePlan>& last_plan() const { return last_plan_; }

 private:
  limb::LimbParams params_;
  MpcConfig cfg_;
  bool solver_enabled_;
  double human_kp_ = 0.0;
  double human_kd_ = 0.0;
  bool degraded_ = false;
  std::optional<std::vector<double>> warm_;
  std::optional<TorquePlan> last_plan_;
};

}  // namespace exosim::mpc
