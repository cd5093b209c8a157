#include "exosim/gait_stiffness.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "exosim/parallel.hpp"

namespace exosim::gait {

void StiffnessParams::validate() const {
  if (!(k_st > 0.0) || !(k_sw > 0.0) || !(a > 0.0)) {
    throw std::domain_error("StiffnessParams: k_st, k_sw, a must be positive");
  }
  if (theta0_st == theta0_sw) {
    throw std::domain_error("StiffnessParams: equal equilibrium angles");
  }
}

void BilateralKnees::validate() const {
  for (double v : {theta_kr, theta_kl}) {
    if (!std::isfinite(v) || v < -5.0 || v > 140.0) {
      throw std::domain_error("BilateralKnees: angle outside [-5, 140] deg");
    }
  }
}

double stance_swing_blend(const BilateralKnees& knees, double a, double b) {
  const double f = (knees.theta_kr - knees.theta_kl) - b;
  return 1.0 / (1.0 + std::exp(-a * f));
}

double estimate_knee_torque(double theta_ki, double blend,
                            const StiffnessParams& p) {
  return (1.0 - blend) * p.k_st * (theta_ki - p.theta0_st) +
         blend * p.k_sw * (theta_ki - p.theta0_sw);
}

GaitPhase gait_phase(const std::vector<double>& heel_strikes, double t) {
  if (heel_strikes.size() < 2) {
    throw std::invalid_argument("gait_phase: need at least two heel strikes");
  }
  for (std::size_t i = 1; i < heel_strikes.size(); ++i) {
    if (!(heel_strikes[i] > heel_strikes[i - 1])) {
      throw std::invalid_argument("gait_phase: strikes must increase");
    }
  }
  if (t < heel_strikes.front() || t >= heel_strikes.back()) {
    throw std::out_of_range("gait_phase: t outside covered strides");
  }
  auto it = std::upper_bound(heel_strikes.begin(), heel_strikes.end(), t);
  const double t1 = *it;
  const double t0 = *(it - 1);
  return {(t - t0) / (t1 - t0)};
}

namespace {

using Eigen::VectorXd;

// Internal optimization vector: (log k_st, log k_sw, theta0_st, theta0_sw,
// log a, b). The log coordinates keep the positivity invariants without
// penalty terms.
VectorXd to_vec(const StiffnessParams& p) {
  VectorXd x(6);
  x << std::log(p.k_st), std::log(p.k_sw), p.theta0_st, p.theta0_sw,
      std::log(p.a), p.b;
  return x;
}

StiffnessParams from_vec(const VectorXd& x) {
  StiffnessParams p;
  p.k_st = std::exp(x[0]);
  p.k_sw = std::exp(x[1]);
  p.theta0_st = x[2];
  p.theta0_sw = x[3];
  p.a = std::exp(x[4]);
  p.b = x[5];
  return p;
}

double sum_squared_error(const std::vector<GaitCycleSample>& samples,
                         const StiffnessParams& p) {
  double sse = 0.0;
  for (const auto& smp : samples) {
    const double blend = stance_swing_blend(smp.knees, p.a, p.b);
    const double r =
        estimate_knee_torque(smp.knees.theta_kr, blend, p) - smp.tau_h_true;
    sse += r * r;
  }
  return sse;
}

struct SimplexResult {
  VectorXd x;
  double f = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  std::vector<double> best_trace;
};

// Downhill simplex (Nelder-Mead) with standard coefficients; records the
// best-so-far objective after each iteration.
template <typename F>
SimplexResult nelder_mead(F&& f, const VectorXd& x0, double scale,
                          int max_iters) {
  const int n = static_cast<int>(x0.size());
  std::vector<VectorXd> xs(n + 1, x0);
  std::vector<double> fs(n + 1);
  SimplexResult res;
  for (int i = 1; i <= n; ++i) xs[i][i - 1] += scale;
  for (int i = 0; i <= n; ++i) fs[i] = f(xs[i]);
  res.evaluations = n + 1;

  auto order = [&] {
    std::vector<int> idx(n + 1);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](int a, int b) { return fs[a] < fs[b]; });
    std::vector<VectorXd> xs2(n + 1);
    std::vector<double> fs2(n + 1);
    for (int i = 0; i <= n; ++i) {
      xs2[i] = xs[idx[i]];
      fs2[i] = fs[idx[i]];
    }
    xs.swap(xs2);
    fs.swap(fs2);
  };

  for (int iter = 0; iter < max_iters; ++iter) {
    order();
    res.best_trace.push_back(fs[0]);
    if (std::abs(fs[n] - fs[0]) <= 1e-14 * (1.0 + std::abs(fs[0]))) break;

    VectorXd centroid = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) centroid += xs[i];
    centroid /= n;

    const VectorXd xr = centroid + (centroid - xs[n]);
    const double fr = f(xr);
    ++res.evaluations;
    if (fr < fs[0]) {
      const VectorXd xe = centroid + 2.0 * (centroid - xs[n]);
      const double fe = f(xe);
      ++res.evaluations;
      if (fe < fr) {
        xs[n] = xe;
        fs[n] = fe;
      } else {
        xs[n] = xr;
        fs[n] = fr;
      }
    } else if (fr < fs[n - 1]) {
      xs[n] = xr;
      fs[n] = fr;
    } else {
      const VectorXd xc = centroid + 0.5 * ((fr < fs[n] ? xr : xs[n]) - centroid);
      const double fc = f(xc);
      ++res.evaluations;
      if (fc < std::min(fr, fs[n])) {
        xs[n] = xc;
        fs[n] = fc;
      } else {
        for (int i = 1; i <= n; ++i) {
          xs[i] = xs[0] + 0.5 * (xs[i] - xs[0]);
          fs[i] = f(xs[i]);
          ++res.evaluations;
        }
      }
    }
  }
  order();
  res.x = xs[0];
  res.f = fs[0];
  return res;
}

StiffnessParams data_driven_init(const std::vector<GaitCycleSample>& samples) {
  StiffnessParams init;
  std::vector<double> diffs;
  diffs.reserve(samples.size());
  for (const auto& s : samples) {
    diffs.push_back(s.knees.theta_kr - s.knees.theta_kl);
  }
  std::nth_element(diffs.begin(), diffs.begin() + diffs.size() / 2,
                   diffs.end());
  init.b = diffs[diffs.size() / 2];
  init.a = 0.2;

  // Seed each regime with a torque-angle regression over its samples.
  auto regress = [&](bool swing, double& k, double& theta0, double fallback_k,
                     double fallback_t0) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (const auto& s : samples) {
      const double blend = stance_swing_blend(s.knees, init.a, init.b);
      if ((blend >= 0.5) != swing) continue;
      const double x = s.knees.theta_kr, y = s.tau_h_true;
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++n;
    }
    k = fallback_k;
    theta0 = fallback_t0;
    if (n >= 3) {
      const double var = sxx - sx * sx / n;
      if (var > 1e-9) {
        const double slope = (sxy - sx * sy / n) / var;
        if (slope > 1e-6) {
          k = slope;
          theta0 = sx / n - (sy / n) / slope;
        }
      }
    }
  };
  regress(false, init.k_st, init.theta0_st, 0.05, 10.0);
  regress(true, init.k_sw, init.theta0_sw, 0.012, 65.0);
  if (init.theta0_st == init.theta0_sw) init.theta0_sw += 1.0;
  return init;
}

// Scale-invariant identifiability check at the optimum: finite-difference
// Jacobian of residuals w.r.t. relative parameter changes. A saturated
// regime (e.g. stance-only data) leaves near-zero columns and an enormous
// condition number.
void check_identifiable(const std::vector<GaitCycleSample>& samples,
                        const StiffnessParams& p) {
  const VectorXd x0 = to_vec(p);
  const int n = static_cast<int>(samples.size());
  Eigen::MatrixXd jac(n, 6);
  const double h = 1e-5;
  for (int j = 0; j < 6; ++j) {
    VectorXd xp = x0, xm = x0;
    xp[j] += h;
    xm[j] -= h;
    const StiffnessParams pp = from_vec(xp), pm = from_vec(xm);
    for (int i = 0; i < n; ++i) {
      const auto& s = samples[i];
      const double rp = estimate_knee_torque(
          s.knees.theta_kr, stance_swing_blend(s.knees, pp.a, pp.b), pp);
      const double rm = estimate_knee_torque(
          s.knees.theta_kr, stance_swing_blend(s.knees, pm.a, pm.b), pm);
      jac(i, j) = (rp - rm) / (2.0 * h);
    }
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac);
  const double smax = svd.singularValues()[0];
  const double smin = svd.singularValues()[5];
  if (!(smin > 0.0) || smax / smin > 1e8) {
    throw FitError(
        "fit_stiffness: parameters unidentifiable from the data "
        "(one gait regime is missing or angles are degenerate)");
  }
}

}  // namespace

FitReport fit_stiffness(const std::vector<GaitCycleSample>& samples,
                        const FitOptions& opts) {
  if (samples.size() < 12) {
    throw FitError("fit_stiffness: need at least 12 samples");
  }
  double mean = 0, var = 0;
  for (const auto& s : samples) mean += s.knees.theta_kr;
  mean /= static_cast<double>(samples.size());
  for (const auto& s : samples) {
    var += (s.knees.theta_kr - mean) * (s.knees.theta_kr - mean);
  }
  if (var / static_cast<double>(samples.size()) < 1e-6) {
    throw FitError("fit_stiffness: knee angles are constant");
  }

  // Mild penalty anchoring the equilibrium angles to a physical range;
  // without it a zero-slope regime lets (k, theta0) run off along
  // k -> 0, theta0 -> -inf at constant k * theta0.
  auto objective = [&](const VectorXd& x) {
    const StiffnessParams p = from_vec(x);
    auto excess = [](double v) { return std::max(0.0, std::abs(v) - 120.0); };
    const double anchor = excess(p.theta0_st) * excess(p.theta0_st) +
                          excess(p.theta0_sw) * excess(p.theta0_sw);
    return sum_squared_error(samples, p) + 1e-3 * anchor;
  };

  // All starting points are drawn up-front from one stream so the result
  // does not depend on how starts are scheduled across threads.
  const VectorXd x_init = to_vec(data_driven_init(samples));
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<VectorXd> starts(static_cast<std::size_t>(opts.starts));
  starts[0] = x_init;
  for (int i = 1; i < opts.starts; ++i) {
    VectorXd x = x_init;
    x[0] += 0.4 * gauss(rng);
    x[1] += 0.4 * gauss(rng);
    x[2] += 4.0 * gauss(rng);
    x[3] += 8.0 * gauss(rng);
    x[4] += 0.4 * gauss(rng);
    x[5] += 3.0 * gauss(rng);
    starts[static_cast<std::size_t>(i)] = x;
  }

  std::vector<SimplexResult> results(starts.size());
  par::for_chunks(starts.size(), 1, opts.threads, [&](const par::ChunkRange& c) {
    for (std::size_t i = c.begin; i < c.end; ++i) {
      results[i] = nelder_mead(objective, starts[i], 0.25, opts.max_iters);
    }
  });

  int best = 0;
  for (int i = 1; i < static_cast<int>(results.size()); ++i) {
    if (results[static_cast<std::size_t>(i)].f <
        results[static_cast<std::size_t>(best)].f) {
      best = i;
    }
  }
  const auto& win = results[static_cast<std::size_t>(best)];

  FitReport report;
  report.params = from_vec(win.x);
  report.sse = sum_squared_error(samples, report.params);
  report.best_start = best;
  report.sse_trace = win.best_trace;
  for (const auto& r : results) report.evaluations += r.evaluations;

  check_identifiable(samples, report.params);
  report.params.validate();
  return report;
}

}  // namespace exosim::gait
