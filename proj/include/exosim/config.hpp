#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "exosim/errors.hpp"
#include "exosim/gait_stiffness.hpp"
#include "exosim/limb_dynamics.hpp"

namespace exosim {

/// Flat dotted-key configuration. Every key has a registered default; a file
/// may override known keys but unknown keys are rejected. The full
/// materialized key set can be written back out as the effective-config
/// artifact that makes a run reproducible.
class RunConfig {
 public:
  RunConfig();  // all defaults

  static RunConfig from_file(const std::string& path);

  /// Parses "key = value" lines ('#' comments, blank lines allowed) on top
  /// of the current values.
  void apply_text(const std::string& text, const std::string& origin);

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;

  const std::string& get_string(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  std::uint64_t seed() const { return static_cast<std::uint64_t>(get_int("seed")); }

  /// All keys in sorted order, defaults materialized.
  std::string effective_text() const;
  void write_effective(const std::string& path) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

limb::LimbParams limb_params_from(const RunConfig& cfg);

/// Limb with the exoskeleton worn: device mass lumped into the shank at its
/// attachment offset, COM and inertia recombined by the parallel-axis rule.
limb::LimbParams limb_params_with_exo(const RunConfig& cfg);

gait::StiffnessParams stiffness_params_from(const RunConfig& cfg);

/// Terrain-specific parameters when the stiffness.<terrain>.* overrides are
/// set (the terrain classifier's purpose in the control stack); otherwise
/// the shared stiffness.* block.
gait::StiffnessParams stiffness_params_from(const RunConfig& cfg,
                                            gait::Terrain terrain);

}  // namespace exosim
