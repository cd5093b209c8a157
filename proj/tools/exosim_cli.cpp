// Command-line front end: simulation trials, dataset synthesis, stiffness
// fitting, GRF model training/evaluation and the four-condition benchmark.
// Exit codes: 0 ok, 2 config error, 3 divergence, 4 schema error.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "exosim/benchmark_groups.hpp"
#include "exosim/closed_loop.hpp"
#include "exosim/config.hpp"
#include "exosim/csvio.hpp"
#include "exosim/dataset.hpp"
#include "exosim/gait_stiffness.hpp"
#include "exosim/grf_net.hpp"
#include "exosim/util.hpp"

namespace fs = std::filesystem;
using namespace exosim;

namespace {

RunConfig load_config(const std::string& path, std::uint64_t* seed_override,
                      const std::vector<std::string>& overrides) {
  RunConfig cfg = path.empty() ? RunConfig() : RunConfig::from_file(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    }
    cfg.set(std::string(trim(kv.substr(0, eq))),
            std::string(trim(kv.substr(eq + 1))));
  }
  if (seed_override) cfg.set("seed", std::to_string(*seed_override));
  return cfg;
}

void prepare_out_dir(const std::string& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("cannot create output directory " + out);
}

int cmd_simulate(const std::string& config_path, const std::string& group,
                 const std::string& terrain, std::uint64_t seed,
                 const std::string& out,
                 const std::vector<std::string>& overrides) {
  RunConfig cfg = load_config(config_path, &seed, overrides);
  const sim::Group g = sim::group_from_letter(group.empty() ? 'A' : group[0]);
  const sim::Terrain t = sim::terrain_from_name(terrain);
  const sim::TrialResult result = run_trial(g, t, cfg, seed);
  prepare_out_dir(out);
  sim::write_trial_series(result, out + "/trial.csv");
  sim::write_trial_metrics(result, out + "/metrics.csv");
  cfg.write_effective(out + "/effective_config.txt");
  std::cout << "trial ok: group " << sim::group_letter(g) << " on "
            << sim::terrain_name(t) << ", tracking_rmse="
            << format_double(result.metrics.tracking_rmse)
            << " human_rms=" << format_double(result.metrics.human_rms)
            << " exo_rms=" << format_double(result.metrics.exo_rms) << "\n";
  return 0;
}

int cmd_make_dataset(const std::string& config_path, std::uint64_t seed,
                     const std::string& out,
                     const std::vector<std::string>& overrides) {
  RunConfig cfg = load_config(config_path, &seed, overrides);
  prepare_out_dir(out);
  const sim::DatasetFiles files = sim::generate_synthetic_dataset(cfg, out, seed);
  cfg.write_effective(out + "/effective_config.txt");
  std::cout << "dataset written: " << files.imu_csv << ", " << files.labels_csv
            << ", " << files.gait_csv << "\n";
  return 0;
}

int cmd_fit_stiffness(const std::string& dataset_path, std::uint64_t seed,
                      const std::string& terrain_filter, const std::string& out,
                      const std::vector<std::string>& overrides) {
  RunConfig cfg = load_config("", &seed, overrides);
  auto samples = sim::load_gait_samples(dataset_path);
  if (terrain_filter != "all") {
    const sim::Terrain want = sim::terrain_from_name(terrain_filter);
    std::erase_if(samples,
                  [&](const gait::GaitCycleSample& s) { return s.terrain != want; });
  }
  gait::FitOptions opts;
  opts.seed = seed;
  opts.threads = cfg.get_int("sim.threads");
  const gait::FitReport report = gait::fit_stiffness(samples, opts);
  prepare_out_dir(out);

  std::string text;
  text += "# exosim stiffness fit v1\n";
  text += "stiffness.k_st = " + format_double(report.params.k_st) + "\n";
  text += "stiffness.k_sw = " + format_double(report.params.k_sw) + "\n";
  text += "stiffness.theta0_st = " + format_double(report.params.theta0_st) + "\n";
  text += "stiffness.theta0_sw = " + format_double(report.params.theta0_sw) + "\n";
  text += "stiffness.a = " + format_double(report.params.a) + "\n";
  text += "stiffness.b = " + format_double(report.params.b) + "\n";
  io::write_text_file(out + "/stiffness.txt", text);

  std::string sse;
  sse += "# exosim stiffness fit report v1\n";
  sse += "sse = " + format_double(report.sse) + "\n";
  sse += "best_start = " + std::to_string(report.best_start) + "\n";
  sse += "evaluations = " + std::to_string(report.evaluations) + "\n";
  sse += "samples = " + std::to_string(samples.size()) + "\n";
  io::write_text_file(out + "/fit_report.txt", sse);
  cfg.write_effective(out + "/effective_config.txt");
  std::cout << "fit ok: sse=" << format_double(report.sse)
            << " k_st=" << format_double(report.params.k_st)
            << " k_sw=" << format_double(report.params.k_sw) << "\n";
  return 0;
}

int cmd_train_grf(const std::string& config_path, const std::string& imu,
                  const std::string& labels, std::uint64_t seed,
                  const std::string& checkpoint,
                  const std::vector<std::string>& overrides) {
  RunConfig cfg = load_config(config_path, &seed, overrides);
  grf::NetSizes sizes;
  sizes.hidden = cfg.get_int("net.hidden");
  sizes.proj = cfg.get_int("net.mlp2");
  sizes.mlp1 = cfg.get_int("net.mlp1");
  sizes.mlp2 = cfg.get_int("net.mlp2");
  sizes.window = cfg.get_int("net.window");
  const grf::Dataset data =
      sim::load_grf_dataset(imu, labels, sizes.window, cfg.get_int("net.stride"));

  grf::TrainConfig tc;
  tc.lr = cfg.get_double("net.lr");
  tc.batch = cfg.get_int("net.batch");
  tc.max_epochs = cfg.get_int("net.max_epochs");
  tc.patience = cfg.get_int("net.patience");
  tc.lr_plateau = cfg.get_int("net.lr_plateau");
  tc.lr_factor = cfg.get_double("net.lr_factor");
  tc.lambda_terrain = cfg.get_double("net.lambda_terrain");
  tc.val_fraction = cfg.get_double("net.val_fraction");
  tc.seed = seed;
  tc.chunk = static_cast<std::size_t>(cfg.get_int("net.chunk"));
  tc.threads = cfg.get_int("sim.threads");

  grf::TrainReport report;
  const grf::NetParams params = grf::train(data, sizes, tc, &report);
  grf::save_checkpoint(params, checkpoint);
  cfg.write_effective(checkpoint + ".effective_config.txt");
  std::cout << "train ok: " << data.size() << " windows, best epoch "
            << report.best_epoch << ", val loss "
            << format_double(report.best_val_loss) << "\n";
  return 0;
}

int cmd_eval_grf(const std::string& config_path, const std::string& imu,
                 const std::string& labels, const std::string& checkpoint,
                 const std::string& out,
                 const std::vector<std::string>& overrides) {
  RunConfig cfg = load_config(config_path, nullptr, overrides);
  const grf::NetParams params = grf::load_checkpoint(checkpoint);
  const grf::Dataset data = sim::load_grf_dataset(
      imu, labels, params.sizes.window, cfg.get_int("net.stride"));
  const grf::EvalResult r =
      grf::evaluate(params, data, cfg.get_int("sim.threads"));

  prepare_out_dir(out);
  std::vector<std::vector<std::string>> rows = {
      {"rmse_fx_solid", format_double(r.rmse_fx_solid)},
      {"rmse_fz_solid", format_double(r.rmse_fz_solid)},
      {"rmse_fx_sand", format_double(r.rmse_fx_sand)},
      {"rmse_fz_sand", format_double(r.rmse_fz_sand)},
      {"stance_windows_solid", std::to_string(r.stance_solid)},
      {"stance_windows_sand", std::to_string(r.stance_sand)},
      {"terrain_accuracy", format_double(r.terrain_accuracy)},
  };
  io::write_csv(out + "/grf_eval.csv", "exosim-grfeval-v1", {"metric", "value"},
                rows);
  cfg.write_effective(out + "/effective_config.txt");

  std::cout << "            F_x RMSE   F_z RMSE   stance windows\n";
  std::cout << "  solid     " << format_double(r.rmse_fx_solid) << "   "
            << format_double(r.rmse_fz_solid) << "   " << r.stance_solid << "\n";
  std::cout << "  sand      " << format_double(r.rmse_fx_sand) << "   "
            << format_double(r.rmse_fz_sand) << "   " << r.stance_sand << "\n";
  std::cout << "  terrain accuracy " << format_double(r.terrain_accuracy) << "\n";
  return 0;
}

int cmd_benchmark(const std::string& config_path, int n_seeds,
                  std::uint64_t seed0, const std::string& out,
                  const std::vector<std::string>& overrides) {
  RunConfig cfg = load_config(config_path, nullptr, overrides);
  if (n_seeds < 1) throw ConfigError("--seeds must be >= 1");
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < n_seeds; ++i) seeds.push_back(seed0 + static_cast<std::uint64_t>(i));
  const sim::BenchmarkReport report = sim::compare_groups(cfg, seeds);
  prepare_out_dir(out);
  sim::write_benchmark_report(report, out + "/report.csv");
  sim::write_phase_curves(report, out + "/phase_curves.csv");
  io::write_text_file(out + "/summary.txt", report.summary);
  cfg.write_effective(out + "/effective_config.txt");
  std::cout << report.summary;
  int failed = 0;
  for (const auto& c : report.cells) failed += c.ok ? 0 : 1;
  if (failed > 0) std::cout << failed << " cell(s) failed; see report.csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sagittal human-exoskeleton walking simulator"};
  app.require_subcommand(1);

  std::string config_path, group = "A", terrain = "solid", out = "out";
  std::string imu, labels, checkpoint, dataset;
  std::uint64_t seed = 1;
  int n_seeds = 10;
  std::vector<std::string> overrides;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "config file (dotted keys)");
    sub->add_option("--set", overrides, "override: key=value")->take_all();
  };

  auto* sim_cmd = app.add_subcommand("simulate", "run one closed-loop trial");
  add_common(sim_cmd);
  sim_cmd->add_option("--group", group, "A|B|C|D");
  sim_cmd->add_option("--terrain", terrain, "solid|sand");
  sim_cmd->add_option("--seed", seed);
  sim_cmd->add_option("--out", out)->required();

  auto* ds_cmd = app.add_subcommand("make-dataset", "synthesize IMU/GRF dataset");
  add_common(ds_cmd);
  ds_cmd->add_option("--seed", seed);
  ds_cmd->add_option("--out", out)->required();

  std::string terrain_filter = "all";
  auto* fit_cmd = app.add_subcommand("fit-stiffness", "fit the knee stiffness model");
  add_common(fit_cmd);
  fit_cmd->add_option("--dataset", dataset, "gait CSV")->required();
  fit_cmd->add_option("--terrain", terrain_filter, "solid|sand|all sample filter");
  fit_cmd->add_option("--seed", seed);
  fit_cmd->add_option("--out", out)->required();

  auto* train_cmd = app.add_subcommand("train-grf", "train the GRF estimator");
  add_common(train_cmd);
  train_cmd->add_option("--imu", imu)->required();
  train_cmd->add_option("--labels", labels)->required();
  train_cmd->add_option("--seed", seed);
  train_cmd->add_option("--checkpoint", checkpoint)->required();

  auto* eval_cmd = app.add_subcommand("eval-grf", "evaluate a GRF checkpoint");
  add_common(eval_cmd);
  eval_cmd->add_option("--imu", imu)->required();
  eval_cmd->add_option("--labels", labels)->required();
  eval_cmd->add_option("--checkpoint", checkpoint)->required();
  eval_cmd->add_option("--out", out)->required();

  auto* bench_cmd = app.add_subcommand("benchmark", "four-condition comparison");
  add_common(bench_cmd);
  bench_cmd->add_option("--seeds", n_seeds, "number of seeds");
  bench_cmd->add_option("--seed", seed, "first seed");
  bench_cmd->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (sim_cmd->parsed()) {
      return cmd_simulate(config_path, group, terrain, seed, out, overrides);
    }
    if (ds_cmd->parsed()) return cmd_make_dataset(config_path, seed, out, overrides);
    if (fit_cmd->parsed()) {
      return cmd_fit_stiffness(dataset, seed, terrain_filter, out, overrides);
    }
    if (train_cmd->parsed()) {
      return cmd_train_grf(config_path, imu, labels, seed, checkpoint, overrides);
    }
    if (eval_cmd->parsed()) {
      return cmd_eval_grf(config_path, imu, labels, checkpoint, out, overrides);
    }
    if (bench_cmd->parsed()) {
      return cmd_benchmark(config_path, n_seeds, seed, out, overrides);
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << "\n";
    return 3;
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
