#include "exosim/dataset.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "exosim/csvio.hpp"
#include "exosim/imu_synth.hpp"
#include "exosim/util.hpp"

namespace exosim::sim {

namespace schema {

const std::vector<std::string>& imu_columns() {
  static const std::vector<std::string> cols = {
      "time_s",   "shank_ax", "shank_az", "shank_gy", "heel_ax",
      "heel_az",  "heel_gy",  "toe_ax",   "toe_az",   "toe_gy"};
  return cols;
}

const std::vector<std::string>& label_columns() {
  static const std::vector<std::string> cols = {"time_s", "fx_norm", "fz_norm",
                                                "terrain", "stance"};
  return cols;
}

const std::vector<std::string>& gait_columns() {
  static const std::vector<std::string> cols = {
      "time_s", "s", "theta_kr_deg", "theta_kl_deg", "tau_h_norm", "terrain"};
  return cols;
}

}  // namespace schema

namespace {

std::string fmt(double v) { return format_double(v); }

}  // namespace

DatasetFiles generate_synthetic_dataset(const RunConfig& cfg,
                                        const std::string& out_dir,
                                        std::uint64_t seed) {
  const int trials = cfg.get_int("dataset.seeds");
  if (trials < 1) throw ConfigError("dataset.seeds must be >= 1");
  const double rate = cfg.get_double("sim.rate_hz");
  const double dt = cfg.get_double("sim.dt_inner");
  const int every = std::max(1, static_cast<int>(std::llround(1.0 / (rate * dt))));
  const double accel_noise = cfg.get_double("sim.imu_accel_noise");
  const double gyro_noise = cfg.get_double("sim.imu_gyro_noise");
  const double accel_bias = cfg.get_double("sim.imu_accel_bias");
  const double gyro_bias = cfg.get_double("sim.imu_gyro_bias");

  std::vector<std::vector<std::string>> imu_rows, label_rows, gait_rows;
  double t_offset = 0.0;

  for (Terrain terrain : {Terrain::Solid, Terrain::Sand}) {
    for (int k = 0; k < trials; ++k) {
      const std::uint64_t trial_seed = seed + static_cast<std::uint64_t>(k);
      const TrialResult trial = run_trial(Group::A, terrain, cfg, trial_seed);
      const limb::LimbParams params = limb_params_from(cfg);

      std::mt19937_64 rng(
          mix_seed(trial_seed, std::string("imu/") + terrain_name(terrain)));
      std::normal_distribution<double> gauss(0.0, 1.0);
      Eigen::Matrix<double, 9, 1> bias;
      for (int c = 0; c < 9; ++c) {
        bias[c] = (c % 3 == 2 ? gyro_bias : accel_bias) * gauss(rng);
      }

      const auto& sr = trial.series;
      for (std::size_t i = 0; i < sr.size(); i += static_cast<std::size_t>(every)) {
        limb::JointState st;
        st.q = {sr.q_thigh[i], sr.q_knee[i]};
        st.qdot = {sr.qdot_thigh[i], sr.qdot_knee[i]};
        const Eigen::Vector2d qdd(sr.qddot_thigh[i], sr.qddot_knee[i]);
        Eigen::Matrix<double, 9, 1> ch = imu_channels(params, st, qdd);
        for (int c = 0; c < 9; ++c) {
          ch[c] += bias[c] + (c % 3 == 2 ? gyro_noise : accel_noise) * gauss(rng);
        }
        const double t = t_offset + sr.t[i];
        std::vector<std::string> row{fmt(t)};
        for (int c = 0; c < 9; ++c) row.push_back(fmt(ch[c]));
        imu_rows.push_back(std::move(row));

        const double fx_n = sr.fx[i] / trial.body_weight;
        const double fz_n = sr.fz[i] / trial.body_weight;
        label_rows.push_back({fmt(t), fmt(fx_n), fmt(fz_n),
                              terrain == Terrain::Sand ? "1" : "0",
                              sr.stance[i] > 0.5 ? "1" : "0"});

        // Stiffness-model convention: measured moment sign, body-mass
        // normalized, both knees in degrees.
        const double tau_norm = -sr.tau_h[i] / params.body_mass;
        const double theta_kr = rad_to_deg(sr.q_knee[i]);
        const std::size_t delay = static_cast<std::size_t>(
            std::llround(0.5 * cfg.get_double("gait.stride_period") / dt));
        const double theta_kl =
            i >= delay ? rad_to_deg(sr.q_knee[i - delay])
                       : rad_to_deg(sr.ref_q_knee[i]);  // pre-delay stand-in
        gait_rows.push_back({fmt(t), fmt(sr.s[i]), fmt(theta_kr), fmt(theta_kl),
                             fmt(tau_norm),
                             terrain == Terrain::Sand ? "1" : "0"});
      }
      t_offset += cfg.get_double("sim.duration");
    }
  }

  DatasetFiles files;
  files.imu_csv = out_dir + "/imu.csv";
  files.labels_csv = out_dir + "/labels.csv";
  files.gait_csv = out_dir + "/gait.csv";
  files.manifest = out_dir + "/manifest.txt";
  io::write_csv(files.imu_csv, schema::kImuTag, schema::imu_columns(), imu_rows);
  io::write_csv(files.labels_csv, schema::kLabelsTag, schema::label_columns(),
                label_rows);
  io::write_csv(files.gait_csv, schema::kGaitTag, schema::gait_columns(),
                gait_rows);

  std::ostringstream man;
  man << "# " << schema::kManifestTag << "\n";
  man << "imu_csv = imu.csv\n";
  man << "labels_csv = labels.csv\n";
  man << "gait_csv = gait.csv\n";
  man << "rate_hz = " << fmt(rate) << "\n";
  man << "body_mass_kg = " << fmt(cfg.get_double("limb.body_mass")) << "\n";
  man << "terrains = solid,sand\n";
  man << "checksum_imu = " << std::hex << io::file_checksum(files.imu_csv) << "\n";
  man << "checksum_labels = " << io::file_checksum(files.labels_csv) << "\n";
  man << "checksum_gait = " << io::file_checksum(files.gait_csv) << std::dec
      << "\n";
  io::write_text_file(files.manifest, man.str());
  return files;
}

grf::Dataset load_grf_dataset(const std::string& imu_csv,
                              const std::string& labels_csv, int window_len,
                              int stride) {
  const io::Csv imu =
      io::read_csv(imu_csv, schema::kImuTag, schema::imu_columns());
  const io::Csv lab =
      io::read_csv(labels_csv, schema::kLabelsTag, schema::label_columns());
  if (imu.rows.size() != lab.rows.size()) {
    throw SchemaError("IMU and label CSVs have different row counts");
  }
  const auto n = static_cast<Eigen::Index>(imu.rows.size());
  Eigen::MatrixXd stream(9, n);
  Eigen::MatrixXd labels(4, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    for (int c = 0; c < 9; ++c) {
      stream(c, i) = imu.num(r, static_cast<std::size_t>(c) + 1);
    }
    labels(0, i) = lab.num(r, 1);
    labels(1, i) = lab.num(r, 2);
    labels(2, i) = lab.num(r, 3);
    labels(3, i) = lab.num(r, 4);
  }
  return grf::make_dataset(stream, labels, window_len, stride);
}

std::vector<gait::GaitCycleSample> load_gait_samples(const std::string& path) {
  const io::Csv csv = io::read_csv(path, schema::kGaitTag, schema::gait_columns());
  if (csv.rows.empty()) throw SchemaError("gait CSV has no data rows: " + path);
  std::vector<gait::GaitCycleSample> out;
  out.reserve(csv.rows.size());
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    gait::GaitCycleSample s;
    s.s = csv.num(i, 1);
    s.knees.theta_kr = csv.num(i, 2);
    s.knees.theta_kl = csv.num(i, 3);
    s.tau_h_true = csv.num(i, 4);
    s.terrain = csv.num(i, 5) > 0.5 ? Terrain::Sand : Terrain::Solid;
    out.push_back(s);
  }
  return out;
}

void write_trial_series(const TrialResult& result, const std::string& path) {
  const std::vector<std::string> cols = {
      "time_s",        "s",           "theta_t_deg",    "theta_k_deg",
      "thetadot_t_dps", "thetadot_k_dps", "ref_theta_t_deg", "ref_theta_k_deg",
      "tau_e_cmd_nm",  "tau_e_nm",    "tau_h_nm",       "tau_h_hat_nm",
      "fx_n",          "fz_n",        "fx_hat_n",       "fz_hat_n",
      "stance",        "dtau_hip_nm", "dtau_knee_nm"};
  const auto& sr = result.series;
  std::vector<std::vector<std::string>> rows;
  rows.reserve(sr.size());
  for (std::size_t i = 0; i < sr.size(); ++i) {
    rows.push_back({fmt(sr.t[i]), fmt(sr.s[i]), fmt(rad_to_deg(sr.q_thigh[i])),
                    fmt(rad_to_deg(sr.q_knee[i])),
                    fmt(rad_to_deg(sr.qdot_thigh[i])),
                    fmt(rad_to_deg(sr.qdot_knee[i])),
                    fmt(rad_to_deg(sr.ref_q_thigh[i])),
                    fmt(rad_to_deg(sr.ref_q_knee[i])), fmt(sr.tau_e_cmd[i]),
                    fmt(sr.tau_e[i]), fmt(sr.tau_h[i]), fmt(sr.tau_h_hat[i]),
                    fmt(sr.fx[i]), fmt(sr.fz[i]), fmt(sr.fx_hat[i]),
                    fmt(sr.fz_hat[i]), fmt(sr.stance[i]), fmt(sr.dtau_hip[i]),
                    fmt(sr.dtau_knee[i])});
  }
  io::write_csv(path, schema::kTrialTag, cols, rows);
}

void write_trial_metrics(const TrialResult& result, const std::string& path) {
  const auto& m = result.metrics;
  std::vector<std::vector<std::string>> rows = {
      {"group", std::string(1, group_letter(result.group))},
      {"terrain", terrain_name(result.terrain)},
      {"seed", std::to_string(result.seed)},
      {"tracking_rmse", fmt(m.tracking_rmse)},
      {"human_rms", fmt(m.human_rms)},
      {"exo_rms", fmt(m.exo_rms)},
      {"peak_exo", fmt(m.peak_exo)},
      {"strides", std::to_string(m.strides)},
      {"stance_fraction", fmt(m.stance_fraction)},
  };
  io::write_csv(path, schema::kMetricsTag, {"metric", "value"}, rows);
}

}  // namespace exosim::sim
