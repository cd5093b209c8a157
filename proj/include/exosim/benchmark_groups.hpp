#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "exosim/closed_loop.hpp"

namespace exosim::sim {

struct BenchmarkCell {
  Group group = Group::A;
  Terrain terrain = Terrain::Solid;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  TrialMetrics metrics;
};

struct PhaseCurve {
  Group group;
  Terrain terrain;
  std::array<double, 100> mean_tau_e{};  // N*m per phase bin
};

struct BenchmarkReport {
  std::vector<BenchmarkCell> cells;   // ordered by group, terrain, seed
  std::vector<PhaseCurve> curves;     // groups C and D, both terrains
  std::string summary;                // human-readable

  const BenchmarkCell* find(Group g, Terrain t, std::uint64_t seed) const;
  /// Mean of a metric over seeds; skips failed cells.
  double mean_metric(Group g, Terrain t, double TrialMetrics::*field) const;
};

/// Runs the four-condition comparison over the given seeds on both terrains.
/// Trials are independent and may run in parallel; aggregation order is
/// fixed (group, terrain, seed), so the report is deterministic.
BenchmarkReport compare_groups(const RunConfig& cfg,
                               const std::vector<std::uint64_t>& seeds);

/// Report CSV rows: group, terrain, seed, tracking_rmse, human_rms, exo_rms,
/// peak_exo, strides. Failed cells carry nan metrics.
void write_benchmark_report(const BenchmarkReport& report, const std::string& path);

/// Phase curve CSV: group, terrain, phase_bin, mean_tau_e_nm (100 bins per
/// group/terrain pair).
void write_phase_curves(const BenchmarkReport& report, const std::string& path);

}  // namespace exosim::sim
