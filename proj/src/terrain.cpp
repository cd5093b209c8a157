#include "exosim/terrain.hpp"

#include <algorithm>
#include <cmath>

namespace exosim::sim {

void TerrainModel::validate() const {
  if (!(stiffness > 0.0) || !(damping > 0.0)) {
    throw std::domain_error("TerrainModel: stiffness and damping must be > 0");
  }
  if (yield_depth < 0.0 || friction < 0.0 || tangential_damping < 0.0) {
    throw std::domain_error("TerrainModel: negative parameter");
  }
  if (kind == Terrain::Solid && yield_depth != 0.0) {
    throw std::domain_error("TerrainModel: solid terrain must have yield_depth 0");
  }
  if (!(residual_ratio > 0.0) || residual_ratio > 1.0) {
    throw std::domain_error("TerrainModel: residual_ratio outside (0, 1]");
  }
}

limb::GroundForce terrain_force(const TerrainModel& model, double ground_height,
                                const Eigen::Vector2d& pos,
                                const Eigen::Vector2d& vel, ContactState& state) {
  const double depth = ground_height - pos[1];
  if (depth <= 0.0) return {0.0, 0.0};

  double f_elastic = 0.0;
  if (model.kind == Terrain::Solid) {
    f_elastic = model.stiffness * depth;
  } else if (depth >= state.max_depth) {
    // Virgin loading: on the envelope, deepening the crater. Only
    // min(yield_depth, ratio * depth) of the deformation will recover.
    f_elastic = model.stiffness * depth;
    state.max_depth = depth;
    const double recover =
        std::min(model.yield_depth, model.residual_ratio * depth);
    state.plastic_depth = depth - recover;
  } else {
    // Unload/reload inside the crater: straight line from the crater floor
    // to the deepest envelope point.
    const double elastic = depth - state.plastic_depth;
    if (elastic <= 0.0) return {0.0, 0.0};
    const double span = state.max_depth - state.plastic_depth;
    f_elastic = model.stiffness * state.max_depth * (elastic / span);
  }

  const double depth_rate = -vel[1];
  double fz = f_elastic + model.damping * depth_rate;
  if (fz < 0.0) fz = 0.0;

  double fx = 0.0;
  if (fz > 0.0) {
    const double cap = model.friction * fz;
    fx = std::clamp(-model.tangential_damping * vel[0], -cap, cap);
  }
  return {fx, fz};
}

}  // namespace exosim::sim
