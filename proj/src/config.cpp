#include "exosim/config.hpp"

#include <array>
#include <sstream>

#include "exosim/csvio.hpp"
#include "exosim/util.hpp"

namespace exosim {

namespace {

struct KeyDefault {
  const char* key;
  const char* value;
};

// Registered keys and defaults. Control parameters default to the published
// operating point (stiffness model, MPC weights, horizon, step, assistance
// ratio); the rest are this artifact's documented choices.
constexpr std::array<KeyDefault, 109> kDefaults{{
    {"seed", "1"},

    {"limb.thigh_mass", "7.0"},
    {"limb.shank_mass", "4.3"},
    {"limb.thigh_length", "0.42"},
    {"limb.shank_length", "0.42"},
    {"limb.thigh_com_offset", "0.18"},
    {"limb.shank_com_offset", "0.23"},
    {"limb.thigh_inertia", "0.13"},
    {"limb.shank_inertia", "0.07"},
    {"limb.gravity", "9.81"},
    {"limb.body_mass", "70.0"},

    {"stiffness.k_st", "0.047"},
    {"stiffness.k_sw", "0.012"},
    {"stiffness.theta0_st", "8.7"},
    {"stiffness.theta0_sw", "68.7"},
    {"stiffness.a", "0.19"},
    {"stiffness.b", "3.85"},

    // Optional terrain-specific overrides (empty = inherit stiffness.*),
    // normally produced by fitting each terrain's gait data separately.
    {"stiffness.solid.k_st", ""},
    {"stiffness.solid.k_sw", ""},
    {"stiffness.solid.theta0_st", ""},
    {"stiffness.solid.theta0_sw", ""},
    {"stiffness.solid.a", ""},
    {"stiffness.solid.b", ""},
    {"stiffness.sand.k_st", ""},
    {"stiffness.sand.k_sw", ""},
    {"stiffness.sand.theta0_st", ""},
    {"stiffness.sand.theta0_sw", ""},
    {"stiffness.sand.a", ""},
    {"stiffness.sand.b", ""},

    {"exo.mass", "2.2"},
    {"exo.com_offset", "0.38"},
    {"exo.friction", "0.05"},

    {"human.kp", "420.0"},
    {"human.kd", "28.0"},
    {"human.awareness", "0.5"},

    {"actuator.kp", "9.0"},
    {"actuator.ki", "500.0"},
    {"actuator.time_constant", "0.02"},
    {"actuator.noise_sigma", "0.05"},

    {"terrain.solid.stiffness", "50000"},
    {"terrain.solid.damping", "800"},
    {"terrain.solid.friction", "0.8"},
    {"terrain.solid.tangential_damping", "2000"},
    {"terrain.solid.yield_depth", "0"},
    {"terrain.solid.residual_ratio", "1.0"},
    {"terrain.sand.stiffness", "35000"},
    {"terrain.sand.damping", "700"},
    {"terrain.sand.friction", "0.6"},
    {"terrain.sand.tangential_damping", "1500"},
    {"terrain.sand.yield_depth", "0.02"},
    {"terrain.sand.residual_ratio", "0.8"},

    {"gait.stride_period", "1.1"},
    {"gait.thigh_amplitude", "22.0"},
    {"gait.thigh_offset", "7.0"},
    {"gait.solid.stance_flexion", "8.0"},
    {"gait.solid.stance_bump_center", "0.28"},
    {"gait.solid.ground_offset", "0.016"},
    {"gait.solid.swing_flexion", "62.0"},
    {"gait.sand.stance_flexion", "5.0"},
    {"gait.sand.stance_bump_center", "0.18"},
    {"gait.sand.ground_offset", "0.032"},
    {"gait.sand.swing_flexion", "70.0"},

    {"mpc.h", "50"},
    {"mpc.dt", "0.04"},
    {"mpc.w1", "1.0"},
    {"mpc.w2", "0.15"},
    {"mpc.w3", "0.5"},
    {"mpc.alpha", "0.3"},
    {"mpc.tau_limit", "15.0"},
    {"mpc.penalty_weight", "1000.0"},
    {"mpc.max_iters", "200"},
    {"mpc.solver", "on"},
    {"mpc.human_kp", "40.0"},
    {"mpc.human_kd", "3.2"},

    {"bounds.q_norm_min", "0.0"},
    {"bounds.q_norm_max", "3.0"},
    {"bounds.qdot_norm_min", "0.0"},
    {"bounds.qdot_norm_max", "25.0"},
    {"bounds.qddot_norm_min", "0.0"},
    {"bounds.qddot_norm_max", "800.0"},

    {"net.window", "6"},
    {"net.stride", "1"},
    {"net.hidden", "64"},
    {"net.mlp1", "128"},
    {"net.mlp2", "64"},
    {"net.lr", "0.01"},
    {"net.batch", "256"},
    {"net.max_epochs", "200"},
    {"net.patience", "10"},
    {"net.lr_plateau", "4"},
    {"net.lr_factor", "0.5"},
    {"net.lambda_terrain", "0.5"},
    {"net.val_fraction", "0.2"},
    {"net.chunk", "256"},

    {"sim.dt_inner", "0.001"},
    {"sim.duration", "15.0"},
    {"sim.warmup", "2.0"},
    {"sim.rate_hz", "100"},
    {"sim.threads", "1"},
    {"sim.grf_noise_sigma", "0.02"},
    {"sim.imu_accel_noise", "0.2"},
    {"sim.imu_gyro_noise", "0.02"},
    {"sim.imu_accel_bias", "0.1"},
    {"sim.imu_gyro_bias", "0.01"},
    {"sim.estimator", "oracle"},
    {"sim.checkpoint", ""},
    {"sim.oracle_tau_h", "false"},
    {"sim.stance_threshold", "1.0"},

    {"dataset.seeds", "4"},
}};

}  // namespace

RunConfig::RunConfig() {
  for (const auto& kv : kDefaults) values_[kv.key] = kv.value;
}

RunConfig RunConfig::from_file(const std::string& path) {
  RunConfig cfg;
  std::string text;
  try {
    text = io::read_text_file(path);
  } catch (const SchemaError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  cfg.apply_text(text, path);
  return cfg;
}

void RunConfig::apply_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    auto eq = stripped.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected 'key = value'");
    }
    const std::string key{trim(stripped.substr(0, eq))};
    const std::string value{trim(stripped.substr(eq + 1))};
    if (!values_.count(key)) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": unknown config key '" + key + "'");
    }
    values_[key] = value;
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw ConfigError("unknown config key '" + key + "'");
  }
  it->second = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) > 0; }

const std::string& RunConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) {
    throw ConfigError("unknown config key '" + key + "'");
  }
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  double v = 0.0;
  if (!parse_double(get_string(key), v)) {
    throw ConfigError("config key '" + key + "' is not a number: '" +
                      get_string(key) + "'");
  }
  return v;
}

int RunConfig::get_int(const std::string& key) const {
  const double v = get_double(key);
  const int i = static_cast<int>(v);
  if (static_cast<double>(i) != v) {
    throw ConfigError("config key '" + key + "' is not an integer");
  }
  return i;
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string& v = get_string(key);
  if (v == "true" || v == "on" || v == "1") return true;
  if (v == "false" || v == "off" || v == "0") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: '" + v + "'");
}

std::string RunConfig::effective_text() const {
  std::ostringstream out;
  out << "# exosim effective config v1\n";
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
  return out.str();
}

void RunConfig::write_effective(const std::string& path) const {
  io::write_text_file(path, effective_text());
}

limb::LimbParams limb_params_from(const RunConfig& cfg) {
  limb::LimbParams p;
  p.thigh_mass = cfg.get_double("limb.thigh_mass");
  p.shank_mass = cfg.get_double("limb.shank_mass");
  p.thigh_length = cfg.get_double("limb.thigh_length");
  p.shank_length = cfg.get_double("limb.shank_length");
  p.thigh_com_offset = cfg.get_double("limb.thigh_com_offset");
  p.shank_com_offset = cfg.get_double("limb.shank_com_offset");
  p.thigh_inertia = cfg.get_double("limb.thigh_inertia");
  p.shank_inertia = cfg.get_double("limb.shank_inertia");
  p.gravity = cfg.get_double("limb.gravity");
  p.body_mass = cfg.get_double("limb.body_mass");
  p.validate();
  return p;
}

limb::LimbParams limb_params_with_exo(const RunConfig& cfg) {
  limb::LimbParams p = limb_params_from(cfg);
  const double m_exo = cfg.get_double("exo.mass");
  const double r_exo = cfg.get_double("exo.com_offset");
  const double m = p.shank_mass, c = p.shank_com_offset;
  const double m_new = m + m_exo;
  const double c_new = (m * c + m_exo * r_exo) / m_new;
  p.shank_inertia += m * (c - c_new) * (c - c_new) +
                     m_exo * (r_exo - c_new) * (r_exo - c_new);
  p.shank_mass = m_new;
  p.shank_com_offset = c_new;
  // body_mass stays the subject's: GRF normalization is by subject weight.
  p.validate();
  return p;
}

gait::StiffnessParams stiffness_params_from(const RunConfig& cfg) {
  gait::StiffnessParams p;
  p.k_st = cfg.get_double("stiffness.k_st");
  p.k_sw = cfg.get_double("stiffness.k_sw");
  p.theta0_st = cfg.get_double("stiffness.theta0_st");
  p.theta0_sw = cfg.get_double("stiffness.theta0_sw");
  p.a = cfg.get_double("stiffness.a");
  p.b = cfg.get_double("stiffness.b");
  p.validate();
  return p;
}

gait::StiffnessParams stiffness_params_from(const RunConfig& cfg,
                                            gait::Terrain terrain) {
  gait::StiffnessParams p = stiffness_params_from(cfg);
  const std::string base = terrain == gait::Terrain::Sand ? "stiffness.sand."
                                                          : "stiffness.solid.";
  auto maybe = [&](const char* name, double& field) {
    const std::string& v = cfg.get_string(base + name);
    if (!v.empty()) field = cfg.get_double(base + name);
  };
  maybe("k_st", p.k_st);
  maybe("k_sw", p.k_sw);
  maybe("theta0_st", p.theta0_st);
  maybe("theta0_sw", p.theta0_sw);
  maybe("a", p.a);
  maybe("b", p.b);
  p.validate();
  return p;
}

}  // namespace exosim
