#include "exosim/closed_loop.hpp"

#include <cmath>
#include <deque>
#include <random>
#include <sstream>

#include "exosim/gait_stiffness.hpp"
#include "exosim/imu_synth.hpp"
#include "exosim/mpc_assist.hpp"
#include "exosim/util.hpp"

namespace exosim::sim {

char group_letter(Group g) {
  switch (g) {
    case Group::A: return 'A';
    case Group::B: return 'B';
    case Group::C: return 'C';
    case Group::D: return 'D';
  }
  return '?';
}

Group group_from_letter(char c) {
  switch (c) {
    case 'A': case 'a': return Group::A;
    case 'B': case 'b': return Group::B;
    case 'C': case 'c': return Group::C;
    case 'D': case 'd': return Group::D;
  }
  throw ConfigError(std::string("unknown group '") + c + "', expected A-D");
}

Terrain terrain_from_name(const std::string& name) {
  if (name == "solid") return Terrain::Solid;
  if (name == "sand") return Terrain::Sand;
  throw ConfigError("unknown terrain '" + name + "', expected solid|sand");
}

const char* terrain_name(Terrain t) {
  return t == Terrain::Sand ? "sand" : "solid";
}

void HumanPolicy::validate() const {
  if (!(kp > 0.0) || !(kd > 0.0)) {
    throw std::domain_error("HumanPolicy: gains must be positive");
  }
  if (awareness < 0.0 || awareness > 1.0) {
    throw std::domain_error("HumanPolicy: awareness outside [0,1]");
  }
}

double human_torque(const HumanPolicy& policy, const limb::JointState& state,
                    const Eigen::Vector2d& q_ref, const Eigen::Vector2d& qdot_ref,
                    double felt_tau_e) {
  const double pd = policy.kp * (q_ref[1] - state.q[1]) +
                    policy.kd * (qdot_ref[1] - state.qdot[1]);
  return pd - policy.awareness * felt_tau_e;
}

void ActuatorState::validate() const {
  if (kp < 0.0 || ki < 0.0) throw std::domain_error("ActuatorState: negative gains");
  if (!(time_constant > 0.0)) {
    throw std::domain_error("ActuatorState: time constant must be positive");
  }
  if (!(tau_limit > 0.0)) throw std::domain_error("ActuatorState: tau_limit <= 0");
}

double pi_actuator_step(ActuatorState& act, double tau_cmd, double dt,
                        double noise_sample) {
  if (!(dt > 0.0)) throw std::domain_error("pi_actuator_step: dt <= 0");
  const double measured = act.motor_torque + act.noise_sigma * noise_sample;
  const double err = tau_cmd - measured;
  act.integrator += act.ki * err * dt;
  act.integrator = std::clamp(act.integrator, -act.tau_limit, act.tau_limit);
  const double u = act.kp * err + act.integrator;
  act.motor_torque += dt * (u - act.motor_torque) / act.time_constant;
  act.motor_torque = std::clamp(act.motor_torque, -act.tau_limit, act.tau_limit);
  return act.motor_torque;
}

namespace {

TerrainModel terrain_model_from(const RunConfig& cfg, Terrain terrain) {
  const std::string base =
      terrain == Terrain::Sand ? "terrain.sand." : "terrain.solid.";
  TerrainModel m;
  m.kind = terrain;
  m.stiffness = cfg.get_double(base + "stiffness");
  m.damping = cfg.get_double(base + "damping");
  m.friction = cfg.get_double(base + "friction");
  m.tangential_damping = cfg.get_double(base + "tangential_damping");
  m.yield_depth = cfg.get_double(base + "yield_depth");
  m.residual_ratio = cfg.get_double(base + "residual_ratio");
  m.validate();
  return m;
}

GaitShape gait_shape_from(const RunConfig& cfg, Terrain terrain) {
  GaitShape g = gait_shape_preset(terrain);
  g.stride_period = cfg.get_double("gait.stride_period");
  g.thigh_amplitude = cfg.get_double("gait.thigh_amplitude");
  g.thigh_offset = cfg.get_double("gait.thigh_offset");
  const std::string base = terrain == Terrain::Sand ? "gait.sand." : "gait.solid.";
  g.stance_flexion = cfg.get_double(base + "stance_flexion");
  g.stance_bump_center = cfg.get_double(base + "stance_bump_center");
  g.swing_flexion = cfg.get_double(base + "swing_flexion");
  g.ground_offset = cfg.get_double(base + "ground_offset");
  return g;
}

// Running phase-binned mean of an estimated signal; the controller predicts
// ahead by reading the profile at future phases (periodic-gait assumption),
// falling back to the freshest value until a bin has data.
struct PhaseProfile {
  std::array<double, 100> sum{};
  std::array<std::size_t, 100> count{};

  void update(double s, double value) {
    auto bin = static_cast<std::size_t>(s * 100.0);
    if (bin > 99) bin = 99;
    sum[bin] += value;
    count[bin] += 1;
  }
  double at(double s, double fallback) const {
    auto bin = static_cast<std::size_t>(s * 100.0);
    if (bin > 99) bin = 99;
    if (count[bin] == 0) return fallback;
    return sum[bin] / static_cast<double>(count[bin]);
  }
};

mpc::MpcConfig mpc_config_from(const RunConfig& cfg) {
  mpc::MpcConfig m;
  m.horizon = cfg.get_int("mpc.h");
  m.dt = cfg.get_double("mpc.dt");
  m.w1 = cfg.get_double("mpc.w1");
  m.w2 = cfg.get_double("mpc.w2");
  m.w3 = cfg.get_double("mpc.w3");
  m.alpha = cfg.get_double("mpc.alpha");
  m.tau_limit = cfg.get_double("mpc.tau_limit");
  m.penalty_weight = cfg.get_double("mpc.penalty_weight");
  m.max_iters = cfg.get_int("mpc.max_iters");
  m.q_norm_min = cfg.get_double("bounds.q_norm_min");
  m.q_norm_max = cfg.get_double("bounds.q_norm_max");
  m.qdot_norm_min = cfg.get_double("bounds.qdot_norm_min");
  m.qdot_norm_max = cfg.get_double("bounds.qdot_norm_max");
  m.qddot_norm_min = cfg.get_double("bounds.qddot_norm_min");
  m.qddot_norm_max = cfg.get_double("bounds.qddot_norm_max");
  m.validate();
  return m;
}

}  // namespace

TrialResult run_trial(Group group, Terrain terrain, const RunConfig& cfg,
                      std::uint64_t seed) {
  const bool wears_exo = group != Group::A;
  const limb::LimbParams params =
      wears_exo ? limb_params_with_exo(cfg) : limb_params_from(cfg);
  const gait::StiffnessParams stiffness = stiffness_params_from(cfg, terrain);
  const TerrainModel ground = terrain_model_from(cfg, terrain);
  const ReferenceGait ref(params, gait_shape_from(cfg, terrain));
  const mpc::MpcConfig mpc_cfg = mpc_config_from(cfg);

  const double dt = cfg.get_double("sim.dt_inner");
  const double duration = cfg.get_double("sim.duration");
  const double warmup = cfg.get_double("sim.warmup");
  if (!(dt > 0.0 && dt <= 0.05)) throw ConfigError("sim.dt_inner outside (0, 0.05]");
  if (!(duration > warmup)) throw ConfigError("sim.duration must exceed sim.warmup");
  const int steps = static_cast<int>(std::llround(duration / dt));
  const int control_every =
      std::max(1, static_cast<int>(std::llround(mpc_cfg.dt / dt)));

  HumanPolicy human;
  human.kp = cfg.get_double("human.kp");
  human.kd = cfg.get_double("human.kd");
  human.awareness = cfg.get_double("human.awareness");
  human.validate();

  ActuatorState act;
  act.kp = cfg.get_double("actuator.kp");
  act.ki = cfg.get_double("actuator.ki");
  act.time_constant = cfg.get_double("actuator.time_constant");
  act.noise_sigma = cfg.get_double("actuator.noise_sigma");
  act.tau_limit = mpc_cfg.tau_limit;
  act.validate();

  const double exo_friction = wears_exo ? cfg.get_double("exo.friction") : 0.0;
  const bool powered = group == Group::C || group == Group::D;
  const bool oracle_tau_h = cfg.get_bool("sim.oracle_tau_h");
  const double grf_noise = cfg.get_double("sim.grf_noise_sigma");
  const double body_weight = params.body_mass * params.gravity;
  const double stance_threshold = cfg.get_double("sim.stance_threshold");

  // GRF estimator backend.
  const bool use_net = cfg.get_string("sim.estimator") == "net";
  std::optional<grf::NetParams> net;
  if (use_net) {
    const std::string ckpt = cfg.get_string("sim.checkpoint");
    if (ckpt.empty()) throw ConfigError("sim.estimator=net needs sim.checkpoint");
    net = grf::load_checkpoint(ckpt);
  }
  const int resample_every =
      std::max(1, static_cast<int>(std::llround(1.0 / (cfg.get_double("sim.rate_hz") * dt))));

  std::ostringstream tag;
  tag << group_letter(group) << "/" << terrain_name(terrain);
  std::mt19937_64 rng(mix_seed(seed, tag.str()));
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double accel_noise = cfg.get_double("sim.imu_accel_noise");
  const double gyro_noise = cfg.get_double("sim.imu_gyro_noise");
  Eigen::Matrix<double, 9, 1> imu_bias;
  for (int c = 0; c < 9; ++c) {
    const double sigma = (c % 3 == 2) ? cfg.get_double("sim.imu_gyro_bias")
                                      : cfg.get_double("sim.imu_accel_bias");
    imu_bias[c] = sigma * gauss(rng);
  }

  mpc::RecedingHorizonController controller(
      params, mpc_cfg, group == Group::D && cfg.get_bool("mpc.solver"),
      cfg.get_double("mpc.human_kp"), cfg.get_double("mpc.human_kd"));

  // Left knee = right knee delayed by half a stride; the reference fills in
  // until the delay line is charged.
  const std::size_t delay_steps = static_cast<std::size_t>(
      std::llround(0.5 * ref.stride_period() / dt));
  std::deque<double> knee_history;

  limb::JointState state;
  state.q = ref.q(0.0);
  state.qdot = ref.qdot(0.0);

  ContactState contact;
  bool contact_was_loaded = false;
  TrialResult result;
  result.group = group;
  result.terrain = terrain;
  result.seed = seed;
  result.dt = dt;
  result.body_weight = body_weight;
  auto& series = result.series;

  double tau_cmd = 0.0;
  double last_tau_h_hat = 0.0;
  limb::GroundForce last_f_hat{0.0, 0.0};
  bool estimator_ready = false;
  Eigen::Vector2d last_qddot = Eigen::Vector2d::Zero();
  Eigen::Vector2d last_tau_e_vec = Eigen::Vector2d::Zero();
  Eigen::Vector2d last_tau_h_vec = Eigen::Vector2d::Zero();
  std::deque<Eigen::Matrix<double, 9, 1>> imu_buffer;
  PhaseProfile tau_h_profile, fx_profile, fz_profile;

  for (int k = 0; k < steps; ++k) {
    const double t = k * dt;
    const double s = ref.phase(t);

    // IMU stream at the dataset rate (net estimator input).
    if (use_net && k % resample_every == 0) {
      Eigen::Matrix<double, 9, 1> ch = imu_channels(params, state, last_qddot);
      for (int c = 0; c < 9; ++c) {
        const double sigma = (c % 3 == 2) ? gyro_noise : accel_noise;
        ch[c] += imu_bias[c] + sigma * gauss(rng);
      }
      imu_buffer.push_back(ch);
      const auto win = static_cast<std::size_t>(net->sizes.window);
      if (imu_buffer.size() > win) imu_buffer.pop_front();
      if (imu_buffer.size() == win) {
        grf::MatrixXd window(9, net->sizes.window);
        for (std::size_t c = 0; c < win; ++c) {
          window.col(static_cast<Eigen::Index>(c)) = imu_buffer[c];
        }
        const grf::GrfEstimate est = grf::forward_one(*net, window);
        last_f_hat = {est.fx_norm * body_weight, est.fz_norm * body_weight};
        estimator_ready = true;
      }
    }

    // Control tick.
    if (powered && k % control_every == 0) {
      const double theta_kr = rad_to_deg(state.q[1]);
      const double theta_kl =
          knee_history.size() >= delay_steps && delay_steps > 0
              ? knee_history.front()
              : rad_to_deg(ref.q(s + 0.5)[1]);
      const double blend =
          gait::stance_swing_blend({theta_kr, theta_kl}, stiffness.a, stiffness.b);
      // The stiffness model lives in the measured-moment convention; the
      // generalized knee coordinate runs the opposite way.
      double tau_h_hat =
          -gait::estimate_knee_torque(theta_kr, blend, stiffness) * params.body_mass;
      if (oracle_tau_h) tau_h_hat = last_tau_h_vec[1];

      mpc::RecedingHorizonController::Measurements meas;
      meas.state = state;
      meas.estimator_ok = !use_net || estimator_ready;
      const auto n = static_cast<std::size_t>(mpc_cfg.horizon) + 1;
      meas.qdot_ref.resize(n);
      meas.q_ref.resize(n);
      meas.tau_h_hat.resize(n);
      meas.f_ext_hat.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double si = ref.phase(t + static_cast<double>(i) * mpc_cfg.dt);
        meas.qdot_ref[i] = ref.qdot(si);
        meas.q_ref[i] = ref.q(si);
        if (i == 0) {
          meas.tau_h_hat[0] = tau_h_hat;
          meas.f_ext_hat[0] = last_f_hat;
        } else {
          meas.tau_h_hat[i] = tau_h_profile.at(si, tau_h_hat);
          meas.f_ext_hat[i] = {fx_profile.at(si, last_f_hat.fx),
                               fz_profile.at(si, last_f_hat.fz)};
        }
      }
      tau_cmd = controller.step(meas);
    }

    // Physics.
    const Eigen::Vector2d foot = limb::ankle_position(params, state.q);
    const Eigen::Vector2d foot_vel = limb::ankle_velocity(params, state);
    if (contact_was_loaded && foot[1] > ref.ground_height()) {
      contact = ContactState{};  // the next step lands on fresh ground
      contact_was_loaded = false;
    }
    const limb::GroundForce f_true =
        terrain_force(ground, ref.ground_height(), foot, foot_vel, contact);
    if (f_true.fz > 0.0) contact_was_loaded = true;

    double motor = 0.0;
    if (powered) {
      motor = pi_actuator_step(act, tau_cmd, dt, gauss(rng));
    }
    const double friction_torque = -exo_friction * state.qdot[1];
    const double tau_h = human_torque(human, state, ref.q(s), ref.qdot(s), motor);

    const Eigen::Vector2d tau_e_vec(0.0, motor + friction_torque);
    const Eigen::Vector2d tau_h_vec(0.0, tau_h);

    Eigen::Vector2d qddot;
    try {
      qddot = limb::forward_dynamics(params, state, tau_e_vec, tau_h_vec, f_true);
    } catch (const std::exception& e) {
      throw DivergenceError("run_trial: dynamics failed at t=" +
                            format_double(t) + ": " + e.what());
    }

    // Fresh estimates for the diagnostic series (and, one step late, the
    // controller). The inverse-dynamics oracle reproduces the true GRF away
    // from the extension singularity.
    double tau_h_hat_now =
        -gait::estimate_knee_torque(
            rad_to_deg(state.q[1]),
            gait::stance_swing_blend(
                {rad_to_deg(state.q[1]),
                 knee_history.size() >= delay_steps && delay_steps > 0
                     ? knee_history.front()
                     : rad_to_deg(ref.q(s + 0.5)[1])},
                stiffness.a, stiffness.b),
            stiffness) *
        params.body_mass;
    if (oracle_tau_h) tau_h_hat_now = tau_h;
    last_tau_h_hat = tau_h_hat_now;

    if (!use_net) {
      limb::GroundForce f_oracle = f_true;
      if (!limb::jacobian_singular(params, state.q)) {
        f_oracle = limb::grf_inverse(params, state, qddot, tau_e_vec, tau_h_vec);
      }
      last_f_hat = {f_oracle.fx + grf_noise * body_weight * gauss(rng),
                    f_oracle.fz + grf_noise * body_weight * gauss(rng)};
      estimator_ready = true;
    }

    tau_h_profile.update(s, tau_h_hat_now);
    fx_profile.update(s, last_f_hat.fx);
    fz_profile.update(s, last_f_hat.fz);

    const Eigen::Matrix2d J = limb::foot_jacobian(params, state.q);
    const Eigen::Vector2d dtau =
        (tau_h_vec - Eigen::Vector2d(0.0, tau_h_hat_now)) +
        J.transpose() * (f_true.vec() - last_f_hat.vec());

    series.t.push_back(t);
    series.s.push_back(s);
    series.q_thigh.push_back(state.q[0]);
    series.q_knee.push_back(state.q[1]);
    series.qdot_thigh.push_back(state.qdot[0]);
    series.qdot_knee.push_back(state.qdot[1]);
    series.qddot_thigh.push_back(qddot[0]);
    series.qddot_knee.push_back(qddot[1]);
    series.ref_q_thigh.push_back(ref.q(s)[0]);
    series.ref_q_knee.push_back(ref.q(s)[1]);
    series.ref_qdot_thigh.push_back(ref.qdot(s)[0]);
    series.ref_qdot_knee.push_back(ref.qdot(s)[1]);
    series.tau_e_cmd.push_back(powered ? tau_cmd : 0.0);
    series.tau_e.push_back(motor);
    series.tau_h.push_back(tau_h);
    series.tau_h_hat.push_back(tau_h_hat_now);
    series.fx.push_back(f_true.fx);
    series.fz.push_back(f_true.fz);
    series.fx_hat.push_back(last_f_hat.fx);
    series.fz_hat.push_back(last_f_hat.fz);
    series.stance.push_back(f_true.fz > stance_threshold ? 1.0 : 0.0);
    series.dtau_hip.push_back(dtau[0]);
    series.dtau_knee.push_back(dtau[1]);

    knee_history.push_back(rad_to_deg(state.q[1]));
    if (knee_history.size() > delay_steps && !knee_history.empty()) {
      knee_history.pop_front();
    }
    last_qddot = qddot;
    last_tau_e_vec = tau_e_vec;
    last_tau_h_vec = tau_h_vec;

    // Semi-implicit Euler, same update as limb::step.
    state.qdot += dt * qddot;
    state.q += dt * state.qdot;
    if (!state.q.allFinite() || !state.qdot.allFinite() ||
        state.qdot.cwiseAbs().maxCoeff() > 1e3) {
      std::ostringstream msg;
      msg << "run_trial: diverged at t=" << format_double(t + dt)
          << " (group " << group_letter(group) << ", " << terrain_name(terrain)
          << "), last state q=[" << format_double(state.q[0]) << ", "
          << format_double(state.q[1]) << "]";
      throw DivergenceError(msg.str());
    }
  }

  // Metrics over the post-warmup window.
  auto& m = result.metrics;
  double track2 = 0.0, h2 = 0.0, e2 = 0.0, stance_sum = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (series.t[i] < warmup) continue;
    const double dv1 = series.ref_qdot_thigh[i] - series.qdot_thigh[i];
    const double dv2 = series.ref_qdot_knee[i] - series.qdot_knee[i];
    track2 += dv1 * dv1 + dv2 * dv2;
    h2 += series.tau_h[i] * series.tau_h[i];
    e2 += series.tau_e[i] * series.tau_e[i];
    m.peak_exo = std::max(m.peak_exo, std::abs(series.tau_e[i]));
    stance_sum += series.stance[i];
    ++n;
  }
  if (n == 0) throw DivergenceError("run_trial: no post-warmup samples");
  m.tracking_rmse = std::sqrt(track2 / static_cast<double>(n));
  m.human_rms = std::sqrt(h2 / static_cast<double>(n));
  m.exo_rms = std::sqrt(e2 / static_cast<double>(n));
  m.stance_fraction = stance_sum / static_cast<double>(n);
  m.strides = static_cast<int>(std::floor((duration - warmup) / ref.stride_period()));
  return result;
}

}  // namespace exosim::sim
