// Serial vs OpenMP timing for the data-parallel kernels: batched network
// inference, chunked gradient accumulation, multi-start stiffness fitting
// and the trial sweep. The serial path is the reference the parallel path
// must reproduce bit-for-bit (asserted here before timing).

#include <chrono>
#include <cstdio>
#include <random>

#include "exosim/benchmark_groups.hpp"
#include "exosim/closed_loop.hpp"
#include "exosim/config.hpp"
#include "exosim/gait_stiffness.hpp"
#include "exosim/grf_net.hpp"
#include "exosim/parallel.hpp"

using namespace exosim;

namespace {

double seconds(const std::function<void()>& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  fn();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}

void report(const char* name, double serial_s, double parallel_s, bool equal) {
  std::printf("%-28s serial %8.3f s   parallel %8.3f s   speedup %5.2fx   %s\n",
              name, serial_s, parallel_s, serial_s / parallel_s,
              equal ? "outputs identical" : "OUTPUTS DIFFER");
}

grf::Dataset random_windows(const grf::NetSizes& sizes, std::size_t n,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  grf::Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    grf::MatrixXd w(sizes.input, sizes.window);
    for (int r = 0; r < sizes.input; ++r) {
      for (int c = 0; c < sizes.window; ++c) w(r, c) = gauss(rng);
    }
    d.windows.push_back(w);
    d.grf.emplace_back(gauss(rng), gauss(rng));
    d.terrain.push_back(i % 2);
    d.stance.push_back(1);
  }
  return d;
}

}  // namespace

int main() {
  const int threads = par::max_threads();
  std::printf("hardware threads available: %d\n\n", threads);

  // Batched network inference.
  {
    grf::NetSizes sizes;
    const grf::NetParams params = grf::init_params(sizes, 3);
    const grf::Dataset data = random_windows(sizes, 20000, 5);
    grf::EvalResult a, b;
    const double ts = seconds([&] { a = grf::evaluate(params, data, 1); });
    const double tp = seconds([&] { b = grf::evaluate(params, data, threads); });
    report("network inference (20k win)", ts, tp,
           a.rmse_fx_solid == b.rmse_fx_solid &&
               a.terrain_accuracy == b.terrain_accuracy);
  }

  // Chunked gradient accumulation.
  {
    grf::NetSizes sizes;
    const grf::NetParams params = grf::init_params(sizes, 4);
    const grf::Dataset data = random_windows(sizes, 6000, 6);
    std::vector<std::size_t> idx(data.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    grf::NetParams ga = params, gb = params;
    double la = 0.0, lb = 0.0;
    const double ts = seconds(
        [&] { la = grf::loss_and_gradient(params, data, idx, 0.5, 256, 1, ga); });
    const double tp = seconds([&] {
      lb = grf::loss_and_gradient(params, data, idx, 0.5, 256, threads, gb);
    });
    const bool equal =
        la == lb &&
        (grf::flatten(ga) - grf::flatten(gb)).cwiseAbs().maxCoeff() == 0.0;
    report("gradient accumulation (6k)", ts, tp, equal);
  }

  // Multi-start stiffness fitting.
  {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<gait::GaitCycleSample> samples;
    const gait::StiffnessParams truth;
    for (int i = 0; i < 2000; ++i) {
      const double s = (i % 400) / 400.0;
      gait::GaitCycleSample smp;
      smp.s = s;
      smp.knees.theta_kr = 8.0 + 55.0 * std::exp(-18.0 * (s - 0.75) * (s - 0.75));
      smp.knees.theta_kl = 8.0 + 55.0 * std::exp(-18.0 * (s - 0.25) * (s - 0.25));
      const double blend = stance_swing_blend(smp.knees, truth.a, truth.b);
      smp.tau_h_true = estimate_knee_torque(smp.knees.theta_kr, blend, truth) +
                       0.01 * gauss(rng);
      samples.push_back(smp);
    }
    gait::FitOptions serial, parallel;
    serial.starts = parallel.starts = 16;
    serial.seed = parallel.seed = 2;
    serial.threads = 1;
    parallel.threads = threads;
    gait::FitReport ra, rb;
    const double ts = seconds([&] { ra = gait::fit_stiffness(samples, serial); });
    const double tp = seconds([&] { rb = gait::fit_stiffness(samples, parallel); });
    report("stiffness fit (16 starts)", ts, tp,
           ra.params.k_st == rb.params.k_st && ra.best_start == rb.best_start);
  }

  // Trial sweep (the four-condition benchmark grid).
  {
    RunConfig cfg;
    cfg.set("sim.duration", "8");
    cfg.set("sim.warmup", "2");
    sim::BenchmarkReport ra, rb;
    const double ts = seconds([&] {
      cfg.set("sim.threads", "1");
      ra = sim::compare_groups(cfg, {1, 2});
    });
    const double tp = seconds([&] {
      cfg.set("sim.threads", std::to_string(threads));
      rb = sim::compare_groups(cfg, {1, 2});
    });
    bool equal = ra.cells.size() == rb.cells.size();
    for (std::size_t i = 0; equal && i < ra.cells.size(); ++i) {
      equal = ra.cells[i].ok == rb.cells[i].ok &&
              ra.cells[i].metrics.human_rms == rb.cells[i].metrics.human_rms;
    }
    report("trial sweep (16 trials)", ts, tp, equal);
  }

  return 0;
}
