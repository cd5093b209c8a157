#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "exosim/gait_stiffness.hpp"
#include "exosim/util.hpp"

using namespace exosim;
using gait::BilateralKnees;
using gait::GaitCycleSample;
using gait::StiffnessParams;

namespace {

// Smooth bilateral knee curves spanning both regimes, used to manufacture
// fitting data from known parameters.
double knee_curve(double s) {
  double v = 5.0;
  for (int k = -1; k <= 1; ++k) {
    const double d1 = (s - 0.28 + k) / 0.10;
    const double d2 = (s - 0.75 + k) / 0.10;
    v += 14.0 * std::exp(-0.5 * d1 * d1) + 58.0 * std::exp(-0.5 * d2 * d2);
  }
  return v;
}

std::vector<GaitCycleSample> synth_samples(const StiffnessParams& truth,
                                           int n_per_stride, int strides,
                                           double noise_sigma,
                                           std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<GaitCycleSample> out;
  for (int k = 0; k < strides; ++k) {
    for (int i = 0; i < n_per_stride; ++i) {
      const double s = static_cast<double>(i) / n_per_stride;
      GaitCycleSample smp;
      smp.s = s;
      smp.knees.theta_kr = knee_curve(s);
      smp.knees.theta_kl = knee_curve(s + 0.5);
      const double blend = stance_swing_blend(smp.knees, truth.a, truth.b);
      smp.tau_h_true = estimate_knee_torque(smp.knees.theta_kr, blend, truth) +
                       noise_sigma * gauss(rng);
      out.push_back(smp);
    }
  }
  return out;
}

StiffnessParams paper_params() { return StiffnessParams{}; }

void check_recovery(const StiffnessParams& got, const StiffnessParams& want,
                    double rel_tol) {
  CHECK(std::abs(got.k_st - want.k_st) / std::abs(want.k_st) < rel_tol);
  CHECK(std::abs(got.k_sw - want.k_sw) / std::abs(want.k_sw) < rel_tol);
  CHECK(std::abs(got.theta0_st - want.theta0_st) / std::abs(want.theta0_st) <
        rel_tol);
  CHECK(std::abs(got.theta0_sw - want.theta0_sw) / std::abs(want.theta0_sw) <
        rel_tol);
  CHECK(std::abs(got.a - want.a) / std::abs(want.a) < rel_tol);
  CHECK(std::abs(got.b - want.b) / std::abs(want.b) < rel_tol);
}

}  // namespace

TEST_CASE("blend is 1/2 at the hyperplane and symmetric") {
  CHECK(gait::stance_swing_blend({30.0 + 3.85, 30.0}, 0.19, 3.85) ==
        doctest::Approx(0.5));
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> f(-40.0, 40.0);
  for (int i = 0; i < 100; ++i) {
    const double d = f(rng);
    const double sp = gait::stance_swing_blend({d, 0.0}, 0.19, 0.0);
    const double sm = gait::stance_swing_blend({-d, 0.0}, 0.19, 0.0);
    CHECK(sp + sm == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("blend with equal knees at the published operating point") {
  const double got = gait::stance_swing_blend({42.0, 42.0}, 0.19, 3.85);
  const double want = 1.0 / (1.0 + std::exp(0.19 * 3.85));
  CHECK(got == doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("torque estimate vanishes at each regime's equilibrium") {
  const StiffnessParams p = paper_params();
  CHECK(gait::estimate_knee_torque(p.theta0_st, 0.0, p) == doctest::Approx(0.0));
  CHECK(gait::estimate_knee_torque(p.theta0_sw, 1.0, p) == doctest::Approx(0.0));
}

TEST_CASE("torque estimate at a mixed blend point") {
  const StiffnessParams p = paper_params();
  const double want =
      0.5 * 0.047 * (30.0 - 8.7) + 0.5 * 0.012 * (30.0 - 68.7);
  CHECK(gait::estimate_knee_torque(30.0, 0.5, p) ==
        doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("torque estimate is affine in the blend and piecewise linear in "
          "the angle") {
  const StiffnessParams p = paper_params();
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> angle(-5.0, 120.0);
  std::uniform_real_distribution<double> blend(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const double th = angle(rng);
    const double s0 = blend(rng), s1 = blend(rng), w = blend(rng);
    const double mix = gait::estimate_knee_torque(th, (1 - w) * s0 + w * s1, p);
    const double lin = (1 - w) * gait::estimate_knee_torque(th, s0, p) +
                       w * gait::estimate_knee_torque(th, s1, p);
    CHECK(mix == doctest::Approx(lin).epsilon(1e-12));

    // Linear in angle for a fixed blend.
    const double a0 = angle(rng), a1 = angle(rng);
    const double mid = gait::estimate_knee_torque(0.5 * (a0 + a1), s0, p);
    const double avg = 0.5 * (gait::estimate_knee_torque(a0, s0, p) +
                              gait::estimate_knee_torque(a1, s0, p));
    CHECK(mid == doctest::Approx(avg).epsilon(1e-12));
  }
}

TEST_CASE("saturated-regime slopes recover the stance and swing stiffness") {
  const StiffnessParams p = paper_params();
  // Deep stance: blend ~ 0, so dtau/dtheta = k_st; deep swing: k_sw.
  const double s_st = gait::stance_swing_blend({8.0, 70.0}, p.a, p.b);
  REQUIRE(s_st < 1e-4);
  const double slope_st = (gait::estimate_knee_torque(12.0, s_st, p) -
                           gait::estimate_knee_torque(8.0, s_st, p)) /
                          4.0;
  CHECK(slope_st == doctest::Approx(p.k_st).epsilon(1e-3));
  const double s_sw = gait::stance_swing_blend({70.0, 8.0}, p.a, p.b);
  REQUIRE(s_sw > 1.0 - 1e-4);
  const double slope_sw = (gait::estimate_knee_torque(72.0, s_sw, p) -
                           gait::estimate_knee_torque(64.0, s_sw, p)) /
                          8.0;
  CHECK(slope_sw == doctest::Approx(p.k_sw).epsilon(1e-3));
}

TEST_CASE("noiseless fit recovers the generating parameters within 1%") {
  const StiffnessParams truth = paper_params();
  const auto samples = synth_samples(truth, 160, 3, 0.0, 101);
  gait::FitOptions opts;
  opts.seed = 7;
  const auto report = gait::fit_stiffness(samples, opts);
  check_recovery(report.params, truth, 0.01);
  CHECK(report.sse < 1e-8);
}

TEST_CASE("fit tolerates 5% label noise within 10% parameter error") {
  const StiffnessParams truth = paper_params();
  // Noise scaled to the torque range of the synthetic data.
  double lo = 1e9, hi = -1e9;
  for (const auto& s : synth_samples(truth, 200, 1, 0.0, 1)) {
    lo = std::min(lo, s.tau_h_true);
    hi = std::max(hi, s.tau_h_true);
  }
  const double sigma = 0.05 * (hi - lo);
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto samples = synth_samples(truth, 480, 4, sigma, 1000 + seed);
    gait::FitOptions opts;
    opts.seed = seed;
    const auto report = gait::fit_stiffness(samples, opts);
    check_recovery(report.params, truth, 0.10);
  }
}

TEST_CASE("objective trace of the winning start is non-increasing") {
  const auto samples = synth_samples(paper_params(), 150, 2, 0.002, 42);
  gait::FitOptions opts;
  opts.seed = 3;
  const auto report = gait::fit_stiffness(samples, opts);
  REQUIRE(report.sse_trace.size() > 2);
  for (std::size_t i = 1; i < report.sse_trace.size(); ++i) {
    CHECK(report.sse_trace[i] <= report.sse_trace[i - 1] + 1e-15);
  }
}

TEST_CASE("fit result is independent of the thread count") {
  const auto samples = synth_samples(paper_params(), 100, 2, 0.01, 9);
  gait::FitOptions serial;
  serial.seed = 5;
  serial.threads = 1;
  gait::FitOptions parallel = serial;
  parallel.threads = 4;
  const auto a = gait::fit_stiffness(samples, serial);
  const auto b = gait::fit_stiffness(samples, parallel);
  CHECK(a.params.k_st == b.params.k_st);
  CHECK(a.params.k_sw == b.params.k_sw);
  CHECK(a.params.theta0_st == b.params.theta0_st);
  CHECK(a.params.theta0_sw == b.params.theta0_sw);
  CHECK(a.params.a == b.params.a);
  CHECK(a.params.b == b.params.b);
  CHECK(a.best_start == b.best_start);
}

TEST_CASE("stance-only data is rejected as unidentifiable") {
  const StiffnessParams truth = paper_params();
  std::vector<GaitCycleSample> samples;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> th(6.0, 24.0);
  for (int i = 0; i < 300; ++i) {
    GaitCycleSample s;
    s.knees.theta_kr = th(rng);
    s.knees.theta_kl = s.knees.theta_kr + 60.0;  // left leg deep in swing
    const double blend = stance_swing_blend(s.knees, truth.a, truth.b);
    REQUIRE(blend < 1e-3);
    s.tau_h_true = estimate_knee_torque(s.knees.theta_kr, blend, truth);
    samples.push_back(s);
  }
  CHECK_THROWS_AS(gait::fit_stiffness(samples, {}), FitError);
}

TEST_CASE("constant knee angles are rejected") {
  std::vector<GaitCycleSample> samples(100);
  for (auto& s : samples) {
    s.knees.theta_kr = 20.0;
    s.knees.theta_kl = 30.0;
    s.tau_h_true = 0.5;
  }
  CHECK_THROWS_AS(gait::fit_stiffness(samples, {}), FitError);
}

TEST_CASE("gait phase normalizes strides piecewise linearly") {
  const std::vector<double> hs = {0.0, 0.9, 2.0};
  CHECK(gait::gait_phase(hs, 0.0).s == doctest::Approx(0.0));
  CHECK(gait::gait_phase(hs, 0.45).s == doctest::Approx(0.5));
  CHECK(gait::gait_phase(hs, 0.9).s == doctest::Approx(0.0));
  // Non-uniform strides: 0.9 s then 1.1 s.
  CHECK(gait::gait_phase(hs, 0.9 + 0.55).s == doctest::Approx(0.5));

  CHECK_THROWS_AS(gait::gait_phase(hs, -0.1), std::out_of_range);
  CHECK_THROWS_AS(gait::gait_phase(hs, 2.0), std::out_of_range);
  CHECK_THROWS_AS(gait::gait_phase({1.0}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(gait::gait_phase({1.0, 0.5}, 0.7), std::invalid_argument);
}

TEST_CASE("gait phase sweeps onto [0,1) within each stride") {
  const std::vector<double> hs = {0.0, 1.1, 2.2};
  double prev = -1.0;
  for (int i = 0; i < 1000; ++i) {
    const double t = 1.1 * i / 1000.0;
    const double s = gait::gait_phase(hs, t).s;
    CHECK(s >= 0.0);
    CHECK(s < 1.0);
    CHECK(s >= prev);
    prev = s;
  }
}

TEST_CASE("parameter and knee-range validation") {
  StiffnessParams p = paper_params();
  p.k_st = 0.0;
  CHECK_THROWS_AS(p.validate(), std::domain_error);
  p = paper_params();
  p.theta0_sw = p.theta0_st;
  CHECK_THROWS_AS(p.validate(), std::domain_error);
  BilateralKnees k{150.0, 10.0};
  CHECK_THROWS_AS(k.validate(), std::domain_error);
}
