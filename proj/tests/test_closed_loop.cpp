#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "exosim/benchmark_groups.hpp"
#include "exosim/closed_loop.hpp"
#include "exosim/csvio.hpp"
#include "exosim/dataset.hpp"
#include "exosim/imu_synth.hpp"
#include "exosim/util.hpp"

using namespace exosim;
using sim::ContactState;
using sim::Group;
using sim::Terrain;
using sim::TerrainModel;

namespace {

RunConfig short_config() {
  RunConfig cfg;
  cfg.set("sim.duration", "6.0");
  cfg.set("sim.warmup", "1.5");
  return cfg;
}

TerrainModel solid_model() {
  TerrainModel m;
  m.kind = Terrain::Solid;
  m.stiffness = 40000.0;
  m.damping = 500.0;
  return m;
}

TerrainModel sand_model() {
  TerrainModel m = solid_model();
  m.kind = Terrain::Sand;
  m.stiffness = 30000.0;
  m.yield_depth = 0.02;
  m.residual_ratio = 0.7;
  return m;
}

// Net contact work extracted from a prescribed vertical cycle reaching
// peak_depth below the surface at the given speed.
double cycle_work(const TerrainModel& model, double peak_depth, double speed) {
  ContactState state;
  const double dt = 1e-5;
  const double T = peak_depth / speed;
  double work = 0.0;
  for (double t = 0.0; t < 2.0 * T; t += dt) {
    const bool going_down = t < T;
    const double z = going_down ? -speed * t : -peak_depth + speed * (t - T);
    const double vz = going_down ? -speed : speed;
    const auto f = terrain_force(model, 0.0, {0.0, z}, {0.0, vz}, state);
    work += -f.fz * vz * dt;  // work done on the ground
  }
  return work;
}

}  // namespace

TEST_CASE("no force above the surface") {
  TerrainModel m = solid_model();
  ContactState st;
  const auto f = terrain_force(m, 0.0, {0.1, 0.02}, {0.0, -1.0}, st);
  CHECK(f.fx == 0.0);
  CHECK(f.fz == 0.0);
}

TEST_CASE("solid quasi-static cycles lose only damping work; sand loses more") {
  const double depth = 0.02;
  const double slow = 0.005;
  const double solid_loss = cycle_work(solid_model(), depth, slow);
  // Damping-only estimate for the solid cycle.
  const double damping_est = 2.0 * solid_model().damping * slow * depth;
  CHECK(solid_loss == doctest::Approx(damping_est).epsilon(0.05));

  const double sand_loss = cycle_work(sand_model(), depth, slow);
  CHECK(sand_loss > 3.0 * solid_loss);

  // The plastic part survives at vanishing speed.
  const double sand_crawl = cycle_work(sand_model(), depth, 0.001);
  CHECK(sand_crawl > 0.5 * sand_loss);
}

TEST_CASE("sand reload line is continuous and anchored at the crater") {
  TerrainModel m = sand_model();
  ContactState st;
  (void)terrain_force(m, 0.0, {0.0, -0.03}, {0.0, 0.0}, st);
  const double f_deep = terrain_force(m, 0.0, {0.0, -0.03}, {0.0, 0.0}, st).fz;
  CHECK(f_deep == doctest::Approx(m.stiffness * 0.03));
  CHECK(st.plastic_depth > 0.0);
  const auto f_floor =
      terrain_force(m, 0.0, {0.0, -st.plastic_depth + 1e-6}, {0.0, 0.0}, st);
  CHECK(f_floor.fz < 1.0);
  ContactState st2;
  const auto f = terrain_force(m, 0.0, {0.0, -0.02}, {2.0, 0.0}, st2);
  CHECK(std::abs(f.fx) <= m.friction * f.fz + 1e-12);
}

TEST_CASE("human torque policy algebra") {
  sim::HumanPolicy policy;
  policy.kp = 300.0;
  policy.kd = 20.0;
  policy.awareness = 1.0;
  limb::JointState s;
  s.q = {0.1, 0.4};
  s.qdot = {0.0, 0.5};

  CHECK(sim::human_torque(policy, s, s.q, s.qdot, 0.0) == doctest::Approx(0.0));

  const Eigen::Vector2d q_ref(0.1, 0.5);
  const Eigen::Vector2d qd_ref(0.0, 0.0);
  const double pd = 300.0 * (0.5 - 0.4) + 20.0 * (0.0 - 0.5);
  CHECK(sim::human_torque(policy, s, q_ref, qd_ref, 4.0) ==
        doctest::Approx(pd - 4.0));

  policy.awareness = 0.0;
  CHECK(sim::human_torque(policy, s, q_ref, qd_ref, 4.0) ==
        doctest::Approx(sim::human_torque(policy, s, q_ref, qd_ref, -11.0)));
}

TEST_CASE("PI actuator: rest, step response, anti-windup") {
  sim::ActuatorState act;
  act.noise_sigma = 0.0;
  act.tau_limit = 15.0;

  for (int i = 0; i < 100; ++i) {
    CHECK(sim::pi_actuator_step(act, 0.0, 1e-3) == doctest::Approx(0.0));
  }

  act = sim::ActuatorState{};
  act.noise_sigma = 0.0;
  const double step = 5.0;
  double applied = 0.0;
  const int n = static_cast<int>(5.0 * act.time_constant / 1e-3);
  for (int i = 0; i < n; ++i) applied = sim::pi_actuator_step(act, step, 1e-3);
  CHECK(std::abs(applied - step) < 0.01 * step);

  act = sim::ActuatorState{};
  act.noise_sigma = 0.0;
  act.tau_limit = 10.0;
  for (int i = 0; i < 5000; ++i) {
    sim::pi_actuator_step(act, 50.0, 1e-3);
    CHECK(std::abs(act.integrator) <= act.tau_limit + 1e-12);
    CHECK(std::abs(act.motor_torque) <= act.tau_limit + 1e-12);
  }
}

TEST_CASE("reference gait is periodic with consistent derivatives and "
          "terrain-ordered presets") {
  const limb::LimbParams params;
  const sim::GaitShape solid = sim::gait_shape_preset(Terrain::Solid);
  const sim::GaitShape sand = sim::gait_shape_preset(Terrain::Sand);
  CHECK(sand.swing_flexion > solid.swing_flexion);
  CHECK(sand.stance_flexion < solid.stance_flexion);

  const sim::ReferenceGait ref(params, solid);
  CHECK((ref.q(0.0) - ref.q(1.0)).cwiseAbs().maxCoeff() < 1e-12);
  const double h = 1e-6;
  for (double s : {0.05, 0.21, 0.48, 0.77, 0.93}) {
    const Eigen::Vector2d fd =
        (ref.q(s + h) - ref.q(s - h)) / (2.0 * h * ref.stride_period());
    CHECK((ref.qdot(s) - fd).cwiseAbs().maxCoeff() < 1e-5);
  }

  const sim::ReferenceGait sand_ref(params, sand);
  double stance_max = 0.0, swing_max = 0.0;
  for (int i = 0; i < 200; ++i) {
    const double s = i / 200.0;
    const double knee = rad_to_deg(sand_ref.q(s)[1]);
    if (s < 0.55) stance_max = std::max(stance_max, knee);
    if (s > 0.6) swing_max = std::max(swing_max, knee);
  }
  CHECK(swing_max > 55.0);
  CHECK(stance_max < 25.0);

  const auto strikes = sand_ref.heel_strikes(3.0);
  CHECK(strikes.size() == 3);
  CHECK(strikes[1] == doctest::Approx(sand_ref.stride_period()));
}

TEST_CASE("trials are bitwise deterministic per seed") {
  const RunConfig cfg = short_config();
  const auto a = sim::run_trial(Group::D, Terrain::Sand, cfg, 5);
  const auto b = sim::run_trial(Group::D, Terrain::Sand, cfg, 5);
  REQUIRE(a.series.size() == b.series.size());
  for (std::size_t i = 0; i < a.series.size(); ++i) {
    CHECK(a.series.q_knee[i] == b.series.q_knee[i]);
    CHECK(a.series.tau_e[i] == b.series.tau_e[i]);
    CHECK(a.series.fx_hat[i] == b.series.fx_hat[i]);
  }
  const auto c = sim::run_trial(Group::D, Terrain::Sand, cfg, 6);
  bool any_different = false;
  for (std::size_t i = 0; i < a.series.size(); ++i) {
    if (a.series.tau_e[i] != c.series.tau_e[i]) any_different = true;
  }
  CHECK(any_different);
}

TEST_CASE("group A equals group D when the device is weightless and idle") {
  RunConfig cfg = short_config();
  cfg.set("exo.mass", "1e-9");
  cfg.set("exo.friction", "0");
  cfg.set("mpc.alpha", "0");
  cfg.set("mpc.solver", "off");
  cfg.set("actuator.noise_sigma", "0");
  const auto a = sim::run_trial(Group::A, Terrain::Solid, cfg, 3);
  const auto d = sim::run_trial(Group::D, Terrain::Solid, cfg, 3);
  REQUIRE(a.series.size() == d.series.size());
  double max_dq = 0.0, max_tau = 0.0;
  for (std::size_t i = 0; i < a.series.size(); ++i) {
    max_dq = std::max(max_dq, std::abs(a.series.q_knee[i] - d.series.q_knee[i]));
    max_tau = std::max(max_tau, std::abs(d.series.tau_e[i]));
  }
  CHECK(max_dq < 1e-9);
  CHECK(max_tau == 0.0);
}

TEST_CASE("perfect estimation zeroes the torque-error diagnostic") {
  RunConfig cfg = short_config();
  cfg.set("sim.oracle_tau_h", "true");
  cfg.set("sim.grf_noise_sigma", "0");
  const auto r = sim::run_trial(Group::D, Terrain::Solid, cfg, 2);
  double worst = 0.0;
  for (std::size_t i = 0; i < r.series.size(); ++i) {
    worst = std::max({worst, std::abs(r.series.dtau_hip[i]),
                      std::abs(r.series.dtau_knee[i])});
  }
  CHECK(worst < 1e-8);
}

TEST_CASE("applied exoskeleton torque respects the actuator limit") {
  RunConfig cfg = short_config();
  cfg.set("mpc.tau_limit", "8.0");
  for (Group g : {Group::C, Group::D}) {
    const auto r = sim::run_trial(g, Terrain::Sand, cfg, 4);
    CHECK(r.metrics.peak_exo <= 8.0 + 1e-9);
  }
}

TEST_CASE("synthetic IMU channels match finite-difference kinematics") {
  const limb::LimbParams params;
  auto q_of = [](double t) {
    return Eigen::Vector2d(0.2 * std::sin(2.0 * t), 0.5 + 0.3 * std::sin(3.0 * t));
  };
  auto qd_of = [](double t) {
    return Eigen::Vector2d(0.4 * std::cos(2.0 * t), 0.9 * std::cos(3.0 * t));
  };
  auto qdd_of = [](double t) {
    return Eigen::Vector2d(-0.8 * std::sin(2.0 * t), -2.7 * std::sin(3.0 * t));
  };
  // Independent sensor-position kinematics for the finite-difference oracle.
  const auto mounts = sim::imu_mounts(params);
  auto sensor_pos = [&](double t, int k) {
    const Eigen::Vector2d q = q_of(t);
    const double phi = q[0] - q[1];
    const Eigen::Vector2d knee(params.thigh_length * std::sin(q[0]),
                               -params.thigh_length * std::cos(q[0]));
    const Eigen::Vector2d u(std::sin(phi), -std::cos(phi));
    const Eigen::Vector2d nrm(std::cos(phi), std::sin(phi));
    const auto& m = mounts[static_cast<std::size_t>(k)];
    return (knee + m.along * u + m.out * nrm).eval();
  };

  const double t0 = 0.37, h = 1e-5;
  limb::JointState s;
  s.q = q_of(t0);
  s.qdot = qd_of(t0);
  const auto channels = sim::imu_channels(params, s, qdd_of(t0));
  for (int k = 0; k < 3; ++k) {
    const Eigen::Vector2d acc =
        (sensor_pos(t0 + h, k) - 2.0 * sensor_pos(t0, k) + sensor_pos(t0 - h, k)) /
        (h * h);
    const Eigen::Vector2d proper = acc - Eigen::Vector2d(0.0, -params.gravity);
    const double phi = q_of(t0)[0] - q_of(t0)[1];
    const Eigen::Vector2d u(std::sin(phi), -std::cos(phi));
    const Eigen::Vector2d nrm(std::cos(phi), std::sin(phi));
    const auto& m = mounts[static_cast<std::size_t>(k)];
    const double c = std::cos(m.mount), sn = std::sin(m.mount);
    const Eigen::Vector2d x_axis = c * u + sn * nrm;
    const Eigen::Vector2d z_axis = -sn * u + c * nrm;
    CHECK(channels[3 * k + 0] ==
          doctest::Approx(proper.dot(x_axis)).epsilon(1e-6));
    CHECK(channels[3 * k + 1] ==
          doctest::Approx(proper.dot(z_axis)).epsilon(1e-6));
    CHECK(channels[3 * k + 2] ==
          doctest::Approx(qd_of(t0)[0] - qd_of(t0)[1]).epsilon(1e-12));
  }
}

TEST_CASE("dataset files: row counts, swing labels, checksums") {
  RunConfig cfg = short_config();
  cfg.set("dataset.seeds", "1");
  const std::string out = "/tmp/exosim_test_ds";
  std::filesystem::create_directories(out);
  const auto files = sim::generate_synthetic_dataset(cfg, out, 12);

  const auto imu = io::read_csv(files.imu_csv, sim::schema::kImuTag,
                                sim::schema::imu_columns());
  const auto lab = io::read_csv(files.labels_csv, sim::schema::kLabelsTag,
                                sim::schema::label_columns());
  REQUIRE(imu.rows.size() == lab.rows.size());
  // Two terrains x one trial of 6 s at 100 Hz.
  const std::size_t per_trial = imu.rows.size() / 2;
  CHECK(std::llabs(static_cast<long long>(per_trial) - 600) <= 1);

  const auto stance_col = lab.col("stance");
  const auto fx_col = lab.col("fx_norm");
  const auto fz_col = lab.col("fz_norm");
  std::size_t swing_rows = 0;
  for (std::size_t i = 0; i < lab.rows.size(); ++i) {
    if (lab.num(i, stance_col) < 0.5) {
      ++swing_rows;
      CHECK(lab.num(i, fx_col) == 0.0);
      CHECK(lab.num(i, fz_col) == 0.0);
    }
  }
  CHECK(swing_rows > 100);

  const auto before = io::file_checksum(files.imu_csv);
  sim::generate_synthetic_dataset(cfg, out, 12);
  CHECK(io::file_checksum(files.imu_csv) == before);

  const auto samples = sim::load_gait_samples(files.gait_csv);
  CHECK(samples.size() == imu.rows.size());
  std::filesystem::remove_all(out);
}

TEST_CASE("benchmark report shape and degenerate-group equality") {
  RunConfig cfg = short_config();
  cfg.set("exo.mass", "1e-9");
  cfg.set("exo.friction", "0");
  cfg.set("mpc.alpha", "0");
  cfg.set("mpc.solver", "off");
  cfg.set("actuator.noise_sigma", "0");
  const auto report = sim::compare_groups(cfg, {9});
  CHECK(report.cells.size() == 8);
  CHECK(report.curves.size() == 4);

  for (Terrain t : {Terrain::Solid, Terrain::Sand}) {
    const double a = report.find(Group::A, t, 9)->metrics.human_rms;
    for (Group g : {Group::B, Group::C, Group::D}) {
      CHECK(report.find(g, t, 9)->metrics.human_rms ==
            doctest::Approx(a).epsilon(1e-9));
    }
  }

  const std::string out = "/tmp/exosim_test_bench";
  std::filesystem::create_directories(out);
  sim::write_benchmark_report(report, out + "/report.csv");
  sim::write_phase_curves(report, out + "/curves.csv");
  const auto rep = io::read_csv(out + "/report.csv");
  CHECK(rep.tag == sim::schema::kReportTag);
  CHECK(rep.rows.size() == 8);
  const auto curves = io::read_csv(out + "/curves.csv");
  CHECK(curves.rows.size() == 400);
  std::filesystem::remove_all(out);
}

TEST_CASE("failed cells are marked nan in the report") {
  sim::BenchmarkReport report;
  sim::BenchmarkCell ok;
  ok.group = Group::A;
  ok.terrain = Terrain::Solid;
  ok.seed = 1;
  ok.ok = true;
  ok.metrics.human_rms = 3.0;
  sim::BenchmarkCell bad = ok;
  bad.ok = false;
  bad.error = "diverged";
  report.cells = {ok, bad};
  const std::string path = "/tmp/exosim_test_report.csv";
  sim::write_benchmark_report(report, path);
  const auto csv = io::read_csv(path);
  CHECK(csv.rows[1][csv.col("human_rms")] == "nan");
  std::filesystem::remove(path);
}
