#pragma once

#include <Eigen/Dense>

#include "exosim/gait_stiffness.hpp"
#include "exosim/limb_dynamics.hpp"

namespace exosim::sim {

using gait::Terrain;

/// Point-contact ground model. Solid ground is a plain spring-damper. Sand
/// loads along the virgin line F = stiffness * depth, but only part of the
/// deformation recovers: unloading and reloading follow the straight line
/// from the crater floor (plastic depth) back to the deepest point reached,
/// so every load cycle that deepens the crater dissipates the area between
/// the two lines.
struct TerrainModel {
  Terrain kind = Terrain::Solid;
  double stiffness = 50000.0;           // N/m, virgin loading line
  double damping = 800.0;               // N*s/m
  double friction = 0.8;                // Coulomb cap on |Fx| / Fz
  double tangential_damping = 2000.0;   // N*s/m before the friction cap
  double yield_depth = 0.0;             // m, cap on recoverable depth; 0 solid
  double residual_ratio = 1.0;          // recoverable fraction of deformation

  void validate() const;
};

/// Per-trial contact memory: permanent sinkage at the foot's spot and the
/// deepest penetration reached (the reload line's anchor).
struct ContactState {
  double plastic_depth = 0.0;
  double max_depth = 0.0;
};

/// Ground force on the foot for a ground plane at z = ground_height.
/// pos/vel are the ankle point in world coordinates (x forward, z up).
limb::GroundForce terrain_force(const TerrainModel& model, double ground_height,
                                const Eigen::Vector2d& pos,
                                const Eigen::Vector2d& vel, ContactState& state);

}  // namespace exosim::sim
