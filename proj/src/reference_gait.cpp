#include "exosim/reference_gait.hpp"

#include <cmath>

#include "exosim/util.hpp"

namespace exosim::sim {

namespace {

// Periodic bump centered at mu with width sigma (in phase units), wrapped
// over neighbouring strides so the composed shape is exactly periodic.
double periodic_bump(double s, double mu, double sigma) {
  double v = 0.0;
  for (int k = -1; k <= 1; ++k) {
    const double d = (s - mu + k) / sigma;
    v += std::exp(-0.5 * d * d);
  }
  return v;
}

double knee_shape(const GaitShape& g, double s) {
  return g.base_flexion + g.stance_flexion * periodic_bump(s, g.stance_bump_center, 0.10) +
         g.swing_flexion * periodic_bump(s, 0.75, 0.095);
}

double thigh_shape(const GaitShape& g, double s) {
  // The hip is unactuated, so the reference mimics the passive ballistic
  // thigh motion: a stance baseline with a forward swing excursion.
  return g.thigh_offset + g.thigh_amplitude * periodic_bump(s, 0.76, 0.10);
}

}  // namespace

GaitShape gait_shape_preset(Terrain terrain) {
  GaitShape g;
  if (terrain == Terrain::Sand) {
    g.stance_flexion = 5.0;
    g.stance_bump_center = 0.18;  // early bump, then sinking push through
    g.swing_flexion = 70.0;
    g.ground_offset = 0.028;      // feet sink deeper into compliant sand
  } else {
    g.stance_flexion = 8.0;
  }
  return g;
}

double ReferenceGait::Series::eval(double s) const {
  double v = a0;
  for (int n = 0; n < kHarmonics; ++n) {
    const double w = 2.0 * kPi * (n + 1) * s;
    v += cos[static_cast<std::size_t>(n)] * std::cos(w) +
         sin[static_cast<std::size_t>(n)] * std::sin(w);
  }
  return v;
}

double ReferenceGait::Series::deriv(double s) const {
  double v = 0.0;
  for (int n = 0; n < kHarmonics; ++n) {
    const double wn = 2.0 * kPi * (n + 1);
    const double w = wn * s;
    v += wn * (-cos[static_cast<std::size_t>(n)] * std::sin(w) +
               sin[static_cast<std::size_t>(n)] * std::cos(w));
  }
  return v;
}

ReferenceGait::ReferenceGait(const limb::LimbParams& params, const GaitShape& shape)
    : shape_(shape) {
  if (!(shape.stride_period > 0.0)) {
    throw std::domain_error("ReferenceGait: stride period must be positive");
  }
  // Project the composed shapes onto the truncated Fourier basis.
  constexpr int kSamples = 512;
  auto project = [&](auto&& fn, Series& out) {
    out.a0 = 0.0;
    out.cos.fill(0.0);
    out.sin.fill(0.0);
    for (int j = 0; j < kSamples; ++j) {
      const double s = static_cast<double>(j) / kSamples;
      const double v = fn(s);
      out.a0 += v;
      for (int n = 0; n < kHarmonics; ++n) {
        const double w = 2.0 * kPi * (n + 1) * s;
        out.cos[static_cast<std::size_t>(n)] += 2.0 * v * std::cos(w);
        out.sin[static_cast<std::size_t>(n)] += 2.0 * v * std::sin(w);
      }
    }
    out.a0 /= kSamples;
    for (int n = 0; n < kHarmonics; ++n) {
      out.cos[static_cast<std::size_t>(n)] /= kSamples;
      out.sin[static_cast<std::size_t>(n)] /= kSamples;
    }
  };
  project([&](double s) { return thigh_shape(shape_, s); }, thigh_);
  project([&](double s) { return knee_shape(shape_, s); }, knee_);

  // Ground plane: highest stance-window ankle point plus half the
  // penetration target, so the reference presses into the ground through
  // stance and clears it in swing.
  double zmax = -1e9;
  for (int j = 0; j < kSamples; ++j) {
    const double s = 0.02 + 0.53 * static_cast<double>(j) / (kSamples - 1);
    const double z = limb::ankle_position(params, q(s))[1];
    zmax = std::max(zmax, z);
  }
  ground_height_ = zmax + 0.5 * shape_.ground_offset;
}

Eigen::Vector2d ReferenceGait::q(double s) const {
  return {deg_to_rad(thigh_.eval(s)), deg_to_rad(knee_.eval(s))};
}

Eigen::Vector2d ReferenceGait::qdot(double s) const {
  const double ds_dt = 1.0 / shape_.stride_period;
  return {deg_to_rad(thigh_.deriv(s)) * ds_dt, deg_to_rad(knee_.deriv(s)) * ds_dt};
}

double ReferenceGait::phase(double t) const {
  const double T = shape_.stride_period;
  double s = std::fmod(t / T, 1.0);
  if (s < 0.0) s += 1.0;
  return s;
}

std::vector<double> ReferenceGait::heel_strikes(double t_end) const {
  std::vector<double> hs;
  for (double t = 0.0; t <= t_end + 1e-12; t += shape_.stride_period) {
    hs.push_back(t);
  }
  return hs;
}

}  // namespace exosim::sim
