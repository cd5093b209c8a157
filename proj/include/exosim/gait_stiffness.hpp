#pragma once

#include <cstdint>
#include <vector>

#include "exosim/errors.hpp"

namespace exosim::gait {

/// Dual-regime knee stiffness model. Angles are in degrees and torques are
/// body-mass-normalized (N*m/kg), the convention the fitted datasets use;
/// conversion to the simulator's generalized convention happens at the
/// closed-loop boundary.
struct StiffnessParams {
  double k_st = 0.047;        // stance stiffness, (N*m/kg)/deg
  double k_sw = 0.012;        // swing stiffness
  double theta0_st = 8.7;     // deg, stance equilibrium
  double theta0_sw = 68.7;    // deg, swing equilibrium
  double a = 0.19;            // 1/deg, sigmoid sharpness
  double b = 3.85;            // deg, hyperplane offset

  void validate() const;
};

struct BilateralKnees {
  double theta_kr = 0.0;  // deg, right knee
  double theta_kl = 0.0;  // deg, left knee

  void validate() const;
};

struct GaitPhase {
  double s = 0.0;  // stride progress in [0, 1)
};

enum class Terrain { Solid = 0, Sand = 1 };

struct GaitCycleSample {
  double s = 0.0;
  BilateralKnees knees;
  double tau_h_true = 0.0;  // N*m/kg, fitting label
  Terrain terrain = Terrain::Solid;
};

/// Sigmoid stance/swing blend: S = 1 / (1 + exp(-a f)),
/// f = (theta_kr - theta_kl) - b. Near 0 deep in right-leg stance, near 1 in
/// its swing.
double stance_swing_blend(const BilateralKnees& knees, double a, double b);

/// tau_hat = (1-S) k_st (theta - theta0_st) + S k_sw (theta - theta0_sw).
double estimate_knee_torque(double theta_ki, double blend,
                            const StiffnessParams& p);

struct FitOptions {
  int starts = 8;
  int max_iters = 2000;       // per simplex run
  std::uint64_t seed = 1;
  int threads = 1;            // starts evaluate independently
};

struct FitReport {
  StiffnessParams params;
  double sse = 0.0;
  int best_start = -1;
  int evaluations = 0;
  std::vector<double> sse_trace;  // best-so-far of the winning start
};

/// Least-squares fit of all six parameters on right-knee samples.
/// Multi-start downhill simplex; deterministic for a fixed seed, and the
/// winner is resolved by best SSE then lowest start index, so the result is
/// independent of how starts are scheduled. Throws FitError when the data
/// cannot identify both regimes.
FitReport fit_stiffness(const std::vector<GaitCycleSample>& samples,
                        const FitOptions& opts = {});

/// Piecewise-linear stride normalization between consecutive heel strikes.
/// heel_strikes must be strictly increasing with at least two entries;
/// t must lie in [front, back).
GaitPhase gait_phase(const std::vector<double>& heel_strikes, double t);

}  // namespace exosim::gait
