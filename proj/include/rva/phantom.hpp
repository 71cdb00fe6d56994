#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "rva/rigid_transform.hpp"
#include "rva/rng.hpp"

namespace rva {

struct Aabb {
  Vec3 min = Vec3::Zero();
  Vec3 max = Vec3::Zero();

  bool contains(const Vec3& p) const {
    return (p.array() >= min.array()).all() && (p.array() <= max.array()).all();
  }
  bool contains_strict(const Vec3& p) const {
    return (p.array() > min.array()).all() && (p.array() < max.array()).all();
  }
};

/// Straight or gently curved vessel described by its centerline polyline.
struct Vessel {
  std::vector<Vec3> centerline;
  double diameter_mm = 0.0;
  double wall_thickness_mm = 0.0;

  double radius() const { return 0.5 * diameter_mm; }
  double length() const;
  /// Point halfway along the centerline by arc length.
  Vec3 midpoint() const;
  /// Distance from p to the centerline polyline.
  double distance_to_centerline(const Vec3& p) const;
  /// Closest distance between segment [a, b] and the centerline.
  double distance_to_segment(const Vec3& a, const Vec3& b) const;

  /// Throws ValidationError when an invariant does not hold.
  void validate() const;
};

/// Tissue volume. The skin is the top face (z = extent.max.z); the needle and
/// probe approach from +z.
struct TissueBlock {
  Aabb extent;
  /// Depth from the skin to the near wall of the first vessel.
  double skin_depth_to_vessel_mm = 0.0;
  /// Stiffness K in N/mm, symmetric positive-definite.
  Mat3 stiffness_K = Mat3::Identity();
  std::vector<Vessel> vessels;

  double surface_z() const { return extent.max.z(); }
  void validate() const;
};

enum class DepthReference { NearWall, Centerline };

std::string_view to_string(DepthReference ref);
DepthReference depth_reference_from_string(std::string_view name);

struct PhantomParams {
  double diameter_mm = 4.0;
  double depth_mm = 3.0;
  DepthReference depth_reference = DepthReference::NearWall;
  double wall_thickness_mm = 0.0;
  double stiffness_n_per_mm = 0.5;
  bool operator==(const PhantomParams&) const = default;
};

struct RatTailParams {
  double diameter_mean_mm = 0.7;
  double diameter_sd_mm = 0.2;
  double diameter_min_mm = 0.3;
  double diameter_max_mm = 1.2;
  double depth_min_mm = 1.0;
  double depth_max_mm = 3.0;
  double sagitta_max_mm = 0.5;
  double wall_thickness_mm = 0.05;
  double stiffness_n_per_mm = 0.5;
  bool operator==(const RatTailParams&) const = default;
};

struct ScenarioConfig {
  /// Skin-surface point under which the vessel lies.
  Vec3 work_center = Vec3(-430.0, -130.0, 0.0);
  PhantomParams phantom;
  RatTailParams rat;
  /// Lateral noise of the coarse (near-infrared) localization.
  double localization_sigma_mm = 1.0;
  bool operator==(const ScenarioConfig&) const = default;
};

/// Vessels run along +y; this is also the needle's travel direction.
inline const Vec3 kVesselAxis = Vec3::UnitY();

/// Polymer phantom: one straight 4 mm channel whose near wall sits 3 mm under
/// the surface (depth to the wall, not to the centerline, unless configured).
TissueBlock make_phantom_scenario(const ScenarioConfig& config = {});

/// Rat-tail vein: diameter ~ Normal(0.7, 0.2) truncated to [0.3, 1.2] mm,
/// near-wall depth ~ U[1, 3] mm, and a downward-sagging circular arc.
TissueBlock make_rat_tail_scenario(std::uint64_t rng_seed, const ScenarioConfig& config = {});

struct CoarseLocalization {
  Vec3 approx_position = Vec3::Zero();
  double lateral_sigma_mm = 0.0;
};

/// Stand-in for near-infrared vessel localization: midpoint of the first
/// vessel plus lateral Gaussian noise; no depth information (z is set to the
/// skin surface). Throws NoVesselFound for an empty block.
CoarseLocalization coarse_localize(const TissueBlock& block, Rng& rng, double sigma_mm = 1.0);

/// One vessel–plane intersection, in plane coordinates (lateral y, depth z)
/// relative to the plane origin.
struct CrossSection {
  Vec2 center_mm = Vec2::Zero();
  /// Minor axis; equals the vessel diameter for any tilt.
  double diameter_mm = 0.0;
  double major_axis_mm = 0.0;
  /// Unit direction of the major axis in plane coordinates.
  Vec2 major_direction = Vec2::UnitX();
  double wall_thickness_mm = 0.0;
  std::size_t vessel_index = 0;
};

/// Intersections of the plane x = 0 of `plane_pose` with every vessel. Empty
/// when the plane misses the block or no vessel crosses it.
std::vector<CrossSection> cross_section(const TissueBlock& block, const RigidTransform& plane_pose);

/// True if any part of the block lies on both sides of the plane.
bool plane_intersects(const TissueBlock& block, const RigidTransform& plane_pose);

struct TipState {
  enum class Kind { Outside, InTissue, InLumen, Transfixed };
  Kind kind = Kind::Outside;
  /// Vessel involved for InLumen / Transfixed.
  std::optional<std::size_t> vessel;

  bool operator==(const TipState&) const = default;
};

std::string_view to_string(TipState::Kind kind);

/// Ground-truth tip classification. `vessel_shift` rigidly displaces every
/// vessel (tissue deformation) without moving the block.
TipState tip_state(const TissueBlock& block, const Vec3& tip, const Vec3& vessel_shift = Vec3::Zero());

/// Same, but also reports Transfixed when the straight path from
/// `path_start` to `tip` crossed a lumen the tip is no longer inside.
TipState tip_state(const TissueBlock& block, const Vec3& path_start, const Vec3& tip,
                   const Vec3& vessel_shift);

/// Distance along the ray origin + s·dir (s ≥ 0) to the first point within
/// radius + extra_mm of a vessel centerline, if any.
std::optional<double> lumen_entry_distance(const TissueBlock& block, const Vec3& origin, const Vec3& dir,
                                           double extra_mm = 0.0, const Vec3& vessel_shift = Vec3::Zero());

}  // namespace rva
