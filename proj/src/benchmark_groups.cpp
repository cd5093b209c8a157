#include "exosim/benchmark_groups.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "exosim/csvio.hpp"
#include "exosim/dataset.hpp"
#include "exosim/parallel.hpp"
#include "exosim/util.hpp"

namespace exosim::sim {

const BenchmarkCell* BenchmarkReport::find(Group g, Terrain t,
                                           std::uint64_t seed) const {
  for (const auto& c : cells) {
    if (c.group == g && c.terrain == t && c.seed == seed) return &c;
  }
  return nullptr;
}

double BenchmarkReport::mean_metric(Group g, Terrain t,
                                    double TrialMetrics::*field) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& c : cells) {
    if (c.group == g && c.terrain == t && c.ok) {
      sum += c.metrics.*field;
      ++n;
    }
  }
  return n == 0 ? std::numeric_limits<double>::quiet_NaN()
                : sum / static_cast<double>(n);
}

BenchmarkReport compare_groups(const RunConfig& cfg,
                               const std::vector<std::uint64_t>& seeds) {
  if (seeds.empty()) throw ConfigError("compare_groups: no seeds given");
  const std::array<Group, 4> groups = {Group::A, Group::B, Group::C, Group::D};
  const std::array<Terrain, 2> terrains = {Terrain::Solid, Terrain::Sand};

  struct Job {
    Group group;
    Terrain terrain;
    std::uint64_t seed;
  };
  std::vector<Job> jobs;
  for (Group g : groups) {
    for (Terrain t : terrains) {
      for (std::uint64_t s : seeds) jobs.push_back({g, t, s});
    }
  }

  std::vector<BenchmarkCell> cells(jobs.size());
  std::vector<std::array<double, 100>> bin_sum(jobs.size());
  std::vector<std::array<std::size_t, 100>> bin_count(jobs.size());

  const int threads = cfg.get_int("sim.threads");
  const double warmup = cfg.get_double("sim.warmup");
  par::for_chunks(jobs.size(), 1, threads, [&](const par::ChunkRange& c) {
    for (std::size_t j = c.begin; j < c.end; ++j) {
      const Job& job = jobs[j];
      BenchmarkCell& cell = cells[j];
      cell.group = job.group;
      cell.terrain = job.terrain;
      cell.seed = job.seed;
      bin_sum[j].fill(0.0);
      bin_count[j].fill(0);
      try {
        const TrialResult r = run_trial(job.group, job.terrain, cfg, job.seed);
        cell.metrics = r.metrics;
        cell.ok = true;
        for (std::size_t i = 0; i < r.series.size(); ++i) {
          if (r.series.t[i] < warmup) continue;
          auto bin = static_cast<std::size_t>(r.series.s[i] * 100.0);
          if (bin > 99) bin = 99;
          bin_sum[j][bin] += r.series.tau_e[i];
          bin_count[j][bin] += 1;
        }
      } catch (const std::exception& e) {
        cell.ok = false;
        cell.error = e.what();
      }
    }
  });

  BenchmarkReport report;
  report.cells = std::move(cells);

  // Phase-averaged torque curves for the two powered groups: mean of the
  // per-trial bin means across seeds.
  for (Group g : {Group::C, Group::D}) {
    for (Terrain t : terrains) {
      PhaseCurve curve;
      curve.group = g;
      curve.terrain = t;
      std::array<double, 100> acc{};
      std::array<std::size_t, 100> trials{};
      for (std::size_t j = 0; j < jobs.size(); ++j) {
        if (jobs[j].group != g || jobs[j].terrain != t || !report.cells[j].ok) {
          continue;
        }
        for (std::size_t b = 0; b < 100; ++b) {
          if (bin_count[j][b] > 0) {
            acc[b] += bin_sum[j][b] / static_cast<double>(bin_count[j][b]);
            trials[b] += 1;
          }
        }
      }
      for (std::size_t b = 0; b < 100; ++b) {
        curve.mean_tau_e[b] =
            trials[b] > 0 ? acc[b] / static_cast<double>(trials[b]) : 0.0;
      }
      report.curves.push_back(curve);
    }
  }

  std::ostringstream sum;
  sum << "four-condition benchmark, " << seeds.size() << " seed(s)\n";
  for (Terrain t : terrains) {
    sum << "terrain " << terrain_name(t) << ":\n";
    for (Group g : groups) {
      sum << "  group " << group_letter(g)
          << ": tracking_rmse=" << report.mean_metric(g, t, &TrialMetrics::tracking_rmse)
          << " human_rms=" << report.mean_metric(g, t, &TrialMetrics::human_rms)
          << " exo_rms=" << report.mean_metric(g, t, &TrialMetrics::exo_rms)
          << "\n";
    }
  }
  report.summary = sum.str();
  return report;
}

void write_benchmark_report(const BenchmarkReport& report,
                            const std::string& path) {
  const std::vector<std::string> cols = {"group",     "terrain",  "seed",
                                         "tracking_rmse", "human_rms", "exo_rms",
                                         "peak_exo",  "strides"};
  std::vector<std::vector<std::string>> rows;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (const auto& c : report.cells) {
    const TrialMetrics m = c.ok ? c.metrics
                                : TrialMetrics{nan, nan, nan, nan, 0, nan};
    rows.push_back({std::string(1, group_letter(c.group)),
                    terrain_name(c.terrain), std::to_string(c.seed),
                    format_double(m.tracking_rmse), format_double(m.human_rms),
                    format_double(m.exo_rms), format_double(m.peak_exo),
                    c.ok ? std::to_string(m.strides) : "nan"});
  }
  io::write_csv(path, schema::kReportTag, cols, rows);
}

void write_phase_curves(const BenchmarkReport& report, const std::string& path) {
  const std::vector<std::string> cols = {"group", "terrain", "phase_bin",
                                         "mean_tau_e_nm"};
  std::vector<std::vector<std::string>> rows;
  for (const auto& curve : report.curves) {
    for (std::size_t b = 0; b < curve.mean_tau_e.size(); ++b) {
      rows.push_back({std::string(1, group_letter(curve.group)),
                      terrain_name(curve.terrain), std::to_string(b),
                      format_double(curve.mean_tau_e[b])});
    }
  }
  io::write_csv(path, schema::kCurvesTag, cols, rows);
}

}  // namespace exosim::sim
