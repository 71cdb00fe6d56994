#pragma once

#include <optional>
#include <span>
#include <string_view>

#include "rva/rigid_transform.hpp"
#include "rva/rng.hpp"

namespace rva {

/// Needle force at time t_s after insertion start. force_n is expressed in the
/// needle frame: x and y lateral, z axial (positive resists advance).
struct ForceReading {
  double t_s = 0.0;
  Vec3 force_n = Vec3::Zero();

  bool operator==(const ForceReading&) const = default;
};

struct SafetyLimits {
  double f_threshold_n = 2.0;
  double eps_deform_mm = 0.5;
  /// Combined transform distance, see transform_distance().
  double eps_cal = 0.1 + 100.0 * (0.5 * 3.14159265358979323846 / 180.0);
  /// Weighted joint-space norm (radians, prismatic mm / 100).
  double eps_align = 1e-3;
  double q_threshold = 1.5;

  /// Throws ValidationError naming the first non-positive "safety.*" key.
  void validate() const;
  bool operator==(const SafetyLimits&) const = default;
};

/// Axial force profile parameters. Invented simulation constants.
struct ForceModel {
  double skin_pop_n = 0.8;
  /// Tenting travel before the skin gives.
  double skin_membrane_mm = 0.6;
  /// Fraction of the skin peak that remains after puncture.
  double skin_residual_fraction = 0.5;
  double friction_n_per_mm = 0.03;
  double wall_pop_n = 0.15;
  /// Tenting travel before the vessel wall gives.
  double wall_tent_mm = 0.3;
  double noise_sigma_n = 0.02;

  void validate() const;
  bool operator==(const ForceModel&) const = default;
};

/// Puncture events along the insertion, as needle-path depths from skin contact.
struct PunctureEvents {
  /// Depth at which the tip enters a lumen, if it ever does.
  std::optional<double> wall_puncture_depth_mm;
};

/// Noise-free axial force at `depth_mm` beyond skin contact (0 before contact).
double axial_force(double depth_mm, const PunctureEvents& events, const ForceModel& model = {});

/// Axial profile plus Gaussian sensor noise on all three components.
ForceReading synthesize_force(double t_s, double depth_mm, const PunctureEvents& events, Rng& rng,
                              const ForceModel& model = {});

/// Solves K·u = F by Cholesky. Throws NotPositiveDefinite.
Vec3 estimate_deformation(const Mat3& k, const Vec3& f);

enum class GateResult { Ok, DeformExceeded, ForceExceeded };

std::string_view to_string(GateResult result);

/// Force gate over the whole history (strict >), then the deformation gate
/// (strict >) on `u`.
GateResult check_gates(std::span<const ForceReading> history, const Vec3& u, const SafetyLimits& limits);

/// Single-reading convenience form.
GateResult check_gates(const ForceReading& f, const Vec3& u, const SafetyLimits& limits);

/// Index of the first reading whose magnitude exceeds the force threshold.
std::optional<std::size_t> first_force_trip(std::span<const ForceReading> history, const SafetyLimits& limits);

}  // namespace rva
