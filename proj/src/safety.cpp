#include "rva/safety.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <random>
#include <string>

#include "rva/errors.hpp"

namespace rva {

namespace {

void require_positive(double v, const char* key) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    throw ValidationError(key, "must be positive");
  }
}

void require_non_negative(double v, const char* key) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw ValidationError(key, "must be non-negative");
  }
}

}  // namespace

void SafetyLimits::validate() const {
  require_positive(f_threshold_n, "safety.f_threshold_n");
  require_positive(eps_deform_mm, "safety.eps_deform_mm");
  require_positive(eps_cal, "safety.eps_cal");
  // Infinity is allowed here: it disables the alignment loop.
  if (!(eps_align > 0.0)) {
    throw ValidationError("safety.eps_align", "must be positive");
  }
  require_positive(q_threshold, "safety.q_threshold");
}

void ForceModel::validate() const {
  require_non_negative(skin_pop_n, "safety.force.skin_pop_n");
  require_positive(skin_membrane_mm, "safety.force.skin_membrane_mm");
  if (!(skin_residual_fraction >= 0.0 && skin_residual_fraction <= 1.0)) {
    throw ValidationError("safety.force.skin_residual_fraction", "must be in [0, 1]");
  }
  require_non_negative(friction_n_per_mm, "safety.force.friction_n_per_mm");
  require_non_negative(wall_pop_n, "safety.force.wall_pop_n");
  require_positive(wall_tent_mm, "safety.force.wall_tent_mm");
  require_non_negative(noise_sigma_n, "safety.force.noise_sigma_n");
}

double axial_force(double depth_mm, const PunctureEvents& events, const ForceModel& model) {
  if (depth_mm <= 0.0) {
    return 0.0;
  }
  double force = model.friction_n_per_mm * depth_mm;
  if (depth_mm < model.skin_membrane_mm) {
    force += model.skin_pop_n * depth_mm / model.skin_membrane_mm;
  } else {
    force += model.skin_pop_n * model.skin_residual_fraction;
  }
  if (events.wall_puncture_depth_mm) {
    const double to_wall = *events.wall_puncture_depth_mm - depth_mm;
    if (to_wall > 0.0 && to_wall < model.wall_tent_mm) {
      force += model.wall_pop_n * (1.0 - to_wall / model.wall_tent_mm);
    }
  }
  return force;
}

ForceReading synthesize_force(double t_s, double depth_mm, const PunctureEvents& events, Rng& rng,
                              const ForceModel& model) {
  std::normal_distribution<double> noise(0.0, 1.0);
  ForceReading reading;
  reading.t_s = t_s;
  const double nx = noise(rng);
  const double ny = noise(rng);
  const double nz = noise(rng);
  reading.force_n = Vec3(model.noise_sigma_n * nx, model.noise_sigma_n * ny,
                         axial_force(depth_mm, events, model) + model.noise_sigma_n * nz);
  return reading;
}

Vec3 estimate_deformation(const Mat3& k, const Vec3& f) {
  if (!k.allFinite() || !k.isApprox(k.transpose(), 1e-12)) {
    throw NotPositiveDefinite("stiffness matrix is not symmetric");
  }
  const Eigen::LLT<Mat3> llt(k);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("stiffness matrix is not positive definite");
  }
  return llt.solve(f);
}

std::string_view to_string(GateResult result) {
  switch (result) {
    case GateResult::Ok:
      return "Ok";
    case GateResult::DeformExceeded:
      return "DeformExceeded";
    case GateResult::ForceExceeded:
      return "ForceExceeded";
  }
  return "?";
}

std::optional<std::size_t> first_force_trip(std::span<const ForceReading> history, const SafetyLimits& limits) {
  for (std::size_t i = 0; i < history.size(); ++i) {
    if (history[i].force_n.norm() > limits.f_threshold_n) {
      return i;
    }
  }
  return std::nullopt;
}

GateResult check_gates(std::span<const ForceReading> history, const Vec3& u, const SafetyLimits& limits) {
  if (first_force_trip(history, limits)) {
    return GateResult::ForceExceeded;
  }
  if (u.norm() > limits.eps_deform_mm) {
    return GateResult::DeformExceeded;
  }
  return GateResult::Ok;
}

GateResult check_gates(const ForceReading& f, const Vec3& u, const SafetyLimits& limits) {
  return check_gates(std::span<const ForceReading>(&f, 1), u, limits);
}

}  // namespace rva
