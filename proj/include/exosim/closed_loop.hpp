#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "exosim/config.hpp"
#include "exosim/grf_net.hpp"
#include "exosim/limb_dynamics.hpp"
#include "exosim/reference_gait.hpp"
#include "exosim/terrain.hpp"

namespace exosim::sim {

enum class Group { A, B, C, D };

char group_letter(Group g);
Group group_from_letter(char c);
Terrain terrain_from_name(const std::string& name);
const char* terrain_name(Terrain t);

/// PD surrogate for the human knee torque around the reference gait, with a
/// voluntary offloading fraction of the felt exoskeleton torque.
struct HumanPolicy {
  double kp = 420.0;        // N*m/rad
  double kd = 28.0;         // N*m*s/rad
  double awareness = 0.5;   // in [0,1]

  void validate() const;
};

/// Knee-only human torque (generalized convention):
/// tau_h = kp (theta_ref - theta) + kd (thetadot_ref - thetadot)
///         - awareness * felt_tau_e.
double human_torque(const HumanPolicy& policy, const limb::JointState& state,
                    const Eigen::Vector2d& q_ref, const Eigen::Vector2d& qdot_ref,
                    double felt_tau_e);

/// Low-level torque loop: PI on the measured torque error driving a
/// first-order motor lag, with the integrator clamped at the torque limit.
struct ActuatorState {
  double kp = 9.0;
  double ki = 500.0;
  double time_constant = 0.02;  // s
  double noise_sigma = 0.05;    // N*m, feedback measurement noise
  double tau_limit = 15.0;

  double integrator = 0.0;      // N*m
  double motor_torque = 0.0;    // N*m

  void validate() const;
};

/// Advances the actuator by dt and returns the applied torque.
/// noise_sample is the (already scaled or unit-normal) measurement noise
/// drawn by the caller; the applied feedback is motor + sigma * sample.
double pi_actuator_step(ActuatorState& act, double tau_cmd, double dt,
                        double noise_sample = 0.0);

struct TrialSeries {
  std::vector<double> t, s;
  std::vector<double> q_thigh, q_knee, qdot_thigh, qdot_knee;
  std::vector<double> qddot_thigh, qddot_knee;
  std::vector<double> ref_q_thigh, ref_q_knee, ref_qdot_thigh, ref_qdot_knee;
  std::vector<double> tau_e_cmd, tau_e;       // commanded and applied (motor)
  std::vector<double> tau_h;                  // human knee torque, N*m
  std::vector<double> tau_h_hat;              // estimated, N*m (generalized)
  std::vector<double> fx, fz;                 // true GRF, N
  std::vector<double> fx_hat, fz_hat;         // estimated GRF, N
  std::vector<double> stance;                 // 0/1
  std::vector<double> dtau_hip, dtau_knee;    // estimation-error diagnostic

  std::size_t size() const { return t.size(); }
};

struct TrialMetrics {
  double tracking_rmse = 0.0;   // rad/s, both joints
  double human_rms = 0.0;       // N*m
  double exo_rms = 0.0;         // N*m
  double peak_exo = 0.0;        // N*m
  int strides = 0;
  double stance_fraction = 0.0;
};

struct TrialResult {
  Group group = Group::A;
  Terrain terrain = Terrain::Solid;
  std::uint64_t seed = 0;
  TrialSeries series;
  TrialMetrics metrics;
  double dt = 0.0;
  double body_weight = 0.0;  // N, for normalization
};

/// Full closed-loop trial. Group A simulates the bare limb, B adds the
/// unpowered device (mass + joint friction), C runs the clamped desired
/// torque through the actuator, D runs the receding-horizon controller.
/// Deterministic per (group, terrain, seed, config).
TrialResult run_trial(Group group, Terrain terrain, const RunConfig& cfg,
                      std::uint64_t seed);

}  // namespace exosim::sim
