#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exosim/closed_loop.hpp"
#include "exosim/grf_net.hpp"

namespace exosim::sim {

/// File schemas (version tags + column sets) shared by the CLI and tests.
namespace schema {
inline constexpr const char* kImuTag = "exosim-imu-v1";
inline constexpr const char* kLabelsTag = "exosim-grflabels-v1";
inline constexpr const char* kGaitTag = "exosim-gait-v1";
inline constexpr const char* kTrialTag = "exosim-trial-v1";
inline constexpr const char* kMetricsTag = "exosim-metrics-v1";
inline constexpr const char* kReportTag = "exosim-benchreport-v1";
inline constexpr const char* kCurvesTag = "exosim-phasecurves-v1";
inline constexpr const char* kManifestTag = "exosim-manifest-v1";

const std::vector<std::string>& imu_columns();
const std::vector<std::string>& label_columns();
const std::vector<std::string>& gait_columns();
}  // namespace schema

struct DatasetFiles {
  std::string imu_csv;
  std::string labels_csv;
  std::string gait_csv;
  std::string manifest;
};

/// Runs unassisted trials on both terrains, synthesizes the 9 IMU channels
/// from the simulated shank kinematics (plus seeded noise and per-trial
/// bias), resamples to the dataset rate and writes the IMU / label / gait
/// CSVs and a checksummed manifest into out_dir.
DatasetFiles generate_synthetic_dataset(const RunConfig& cfg,
                                        const std::string& out_dir,
                                        std::uint64_t seed);

/// Loads the IMU + label CSV pair into a windowed dataset.
grf::Dataset load_grf_dataset(const std::string& imu_csv,
                              const std::string& labels_csv, int window_len,
                              int stride);

/// Loads the gait CSV into fitting samples.
std::vector<gait::GaitCycleSample> load_gait_samples(const std::string& path);

/// Trial time-series/metrics writers used by the CLI.
void write_trial_series(const TrialResult& result, const std::string& path);
void write_trial_metrics(const TrialResult& result, const std::string& path);

}  // namespace exosim::sim
