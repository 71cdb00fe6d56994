#include "rva/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "rva/errors.hpp"

namespace rva {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kArcSamples = 33;

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (a + t * ab - p).norm();
}

// Closest distance between segments [p1, q1] and [p2, q2].
double segment_segment_distance(const Vec3& p1, const Vec3& q1, const Vec3& p2, const Vec3& q2) {
  const Vec3 d1 = q1 - p1;
  const Vec3 d2 = q2 - p2;
  const Vec3 r = p1 - p2;
  const double a = d1.squaredNorm();
  const double e = d2.squaredNorm();
  const double f = d2.dot(r);
  constexpr double eps = 1e-18;
  double s = 0.0;
  double t = 0.0;
  if (a <= eps && e <= eps) {
    return r.norm();
  }
  if (a <= eps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= eps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2);
      const double denom = a * e - b * b;
      s = denom > eps ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return ((p1 + s * d1) - (p2 + t * d2)).norm();
}

// Smallest s ≥ 0 where the ray enters the sphere, or +inf.
double ray_sphere(const Vec3& origin, const Vec3& dir, const Vec3& center, double radius) {
  const Vec3 w = origin - center;
  const double b = w.dot(dir);
  const double c = w.squaredNorm() - radius * radius;
  if (c <= 0.0) {
    return 0.0;
  }
  const double disc = b * b - c;
  if (disc < 0.0) {
    return kInf;
  }
  const double s = -b - std::sqrt(disc);
  return s >= 0.0 ? s : kInf;
}

// Smallest s ≥ 0 where the ray enters the finite cylinder around [a, b], or +inf.
double ray_cylinder(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b, double radius) {
  const Vec3 axis_full = b - a;
  const double len = axis_full.norm();
  const Vec3 axis = axis_full / len;
  const Vec3 w = origin - a;
  const Vec3 d_perp = dir - dir.dot(axis) * axis;
  const Vec3 w_perp = w - w.dot(axis) * axis;
  const double qa = d_perp.squaredNorm();
  const double qb = 2.0 * d_perp.dot(w_perp);
  const double qc = w_perp.squaredNorm() - radius * radius;
  const auto axial_ok = [&](double s) {
    const double t = (w + s * dir).dot(axis);
    return t >= 0.0 && t <= len;
  };
  if (qa < 1e-18) {
    return (qc <= 0.0 && axial_ok(0.0)) ? 0.0 : kInf;
  }
  const double disc = qb * qb - 4.0 * qa * qc;
  if (disc < 0.0) {
    return kInf;
  }
  const double root = std::sqrt(disc);
  const double s1 = (-qb - root) / (2.0 * qa);
  const double s2 = (-qb + root) / (2.0 * qa);
  if (s2 < 0.0) {
    return kInf;
  }
  if (s1 >= 0.0) {
    return axial_ok(s1) ? s1 : kInf;
  }
  return axial_ok(0.0) ? 0.0 : kInf;
}

void check_positive(double value, const char* key) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ValidationError(key, "must be positive");
  }
}

Aabb block_extent(const Vec3& center, double half_width, double thickness) {
  return Aabb{center + Vec3(-half_width, -half_width, -thickness), center + Vec3(half_width, half_width, 0.0)};
}

}  // namespace

double Vessel::length() const {
  double total = 0.0;
  for (std::size_t i = 1; i < centerline.size(); ++i) {
    total += (centerline[i] - centerline[i - 1]).norm();
  }
  return total;
}

Vec3 Vessel::midpoint() const {
  double remaining = 0.5 * length();
  for (std::size_t i = 1; i < centerline.size(); ++i) {
    const Vec3 seg = centerline[i] - centerline[i - 1];
    const double len = seg.norm();
    if (remaining <= len) {
      return centerline[i - 1] + seg * (remaining / len);
    }
    remaining -= len;
  }
  return centerline.back();
}

double Vessel::distance_to_centerline(const Vec3& p) const {
  double best = kInf;
  for (std::size_t i = 1; i < centerline.size(); ++i) {
    best = std::min(best, point_segment_distance(p, centerline[i - 1], centerline[i]));
  }
  return best;
}

double Vessel::distance_to_segment(const Vec3& a, const Vec3& b) const {
  double best = kInf;
  for (std::size_t i = 1; i < centerline.size(); ++i) {
    best = std::min(best, segment_segment_distance(a, b, centerline[i - 1], centerline[i]));
  }
  return best;
}

void Vessel::validate() const {
  if (!(diameter_mm > 0.0)) {
    throw ValidationError("vessel.diameter_mm", "must be positive");
  }
  if (!(wall_thickness_mm >= 0.0)) {
    throw ValidationError("vessel.wall_thickness_mm", "must be non-negative");
  }
  if (centerline.size() < 2) {
    throw ValidationError("vessel.centerline", "needs at least two points");
  }
  for (std::size_t i = 1; i < centerline.size(); ++i) {
    if (!((centerline[i] - centerline[i - 1]).norm() > 0.0)) {
      throw ValidationError("vessel.centerline", "zero-length segment");
    }
  }
}

void TissueBlock::validate() const {
  if (!(extent.min.array() < extent.max.array()).all()) {
    throw ValidationError("block.extent", "empty box");
  }
  if ((stiffness_K - stiffness_K.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw ValidationError("block.stiffness_K", "not symmetric");
  }
  if (stiffness_K.llt().info() != Eigen::Success) {
    throw ValidationError("block.stiffness_K", "not positive-definite");
  }
  for (const auto& vessel : vessels) {
    vessel.validate();
    for (const auto& p : vessel.centerline) {
      if (!extent.contains(p)) {
        throw ValidationError("block.vessels", "centerline leaves the block");
      }
    }
  }
}

std::string_view to_string(DepthReference ref) {
  return ref == DepthReference::NearWall ? "near_wall" : "centerline";
}

DepthReference depth_reference_from_string(std::string_view name) {
  if (name == "near_wall") {
    return DepthReference::NearWall;
  }
  if (name == "centerline") {
    return DepthReference::Centerline;
  }
  throw ValidationError("depth_reference", "expected 'near_wall' or 'centerline'");
}

TissueBlock make_phantom_scenario(const ScenarioConfig& config) {
  const auto& p = config.phantom;
  check_positive(p.diameter_mm, "scenario.phantom.diameter_mm");
  const double radius = 0.5 * p.diameter_mm;
  const Vec3 c = config.work_center;
  const double center_depth = p.depth_reference == DepthReference::NearWall ? p.depth_mm + radius : p.depth_mm;

  TissueBlock block;
  block.extent = block_extent(c, 30.0, 25.0);
  block.skin_depth_to_vessel_mm = center_depth - radius;
  block.stiffness_K = p.stiffness_n_per_mm * Mat3::Identity();
  Vessel vessel;
  vessel.diameter_mm = p.diameter_mm;
  vessel.wall_thickness_mm = p.wall_thickness_mm;
  const Vec3 mid = c - center_depth * Vec3::UnitZ();
  vessel.centerline = {mid - 28.0 * kVesselAxis, mid + 28.0 * kVesselAxis};
  block.vessels.push_back(std::move(vessel));
  block.validate();
  return block;
}

TissueBlock make_rat_tail_scenario(std::uint64_t rng_seed, const ScenarioConfig& config) {
  const auto& p = config.rat;
  Rng rng = make_stream(rng_seed, Stream::Scenario);
  double diameter = p.diameter_mean_mm;
  if (p.diameter_sd_mm > 0.0) {
    std::normal_distribution<double> diameter_dist(p.diameter_mean_mm, p.diameter_sd_mm);
    do {
      diameter = diameter_dist(rng);
    } while (diameter < p.diameter_min_mm || diameter > p.diameter_max_mm);
  }
  const double near_wall = std::uniform_real_distribution<double>(p.depth_min_mm, p.depth_max_mm)(rng);
  const double sagitta = std::uniform_real_distribution<double>(0.0, p.sagitta_max_mm)(rng);

  const Vec3 c = config.work_center;
  const double radius = 0.5 * diameter;
  const double half_chord = 20.0;
  const Vec3 mid = c - (near_wall + radius) * Vec3::UnitZ();

  Vessel vessel;
  vessel.diameter_mm = diameter;
  vessel.wall_thickness_mm = p.wall_thickness_mm;
  vessel.centerline.reserve(kArcSamples);
  const double arc_radius = sagitta > 0.0 ? (sagitta * sagitta + half_chord * half_chord) / (2.0 * sagitta) : 0.0;
  for (int i = 0; i < kArcSamples; ++i) {
    const double along = -half_chord + 2.0 * half_chord * i / (kArcSamples - 1);
    const double rise = sagitta > 0.0 ? arc_radius - std::sqrt(arc_radius * arc_radius - along * along) : 0.0;
    vessel.centerline.push_back(mid + along * kVesselAxis + rise * Vec3::UnitZ());
  }

  TissueBlock block;
  block.extent = block_extent(c, 30.0, 20.0);
  block.skin_depth_to_vessel_mm = near_wall;
  block.stiffness_K = p.stiffness_n_per_mm * Mat3::Identity();
  block.vessels.push_back(std::move(vessel));
  block.validate();
  return block;
}

CoarseLocalization coarse_localize(const TissueBlock& block, Rng& rng, double sigma_mm) {
  if (block.vessels.empty()) {
    throw NoVesselFound("no vessel in the imaged region");
  }
  if (!(sigma_mm >= 0.0)) {
    throw ValidationError("scenario.localization_sigma_mm", "must be non-negative");
  }
  const Vec3 mid = block.vessels.front().midpoint();
  CoarseLocalization out;
  out.lateral_sigma_mm = sigma_mm;
  out.approx_position = mid;
  if (sigma_mm > 0.0) {
    std::normal_distribution<double> noise(0.0, sigma_mm);
    out.approx_position.x() += noise(rng);
    out.approx_position.y() += noise(rng);
  }
  out.approx_position.z() = block.surface_z();
  return out;
}

bool plane_intersects(const TissueBlock& block, const RigidTransform& plane_pose) {
  const Vec3 normal = plane_pose.rotation.col(0);
  bool below = false;
  bool above = false;
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 p((corner & 1) ? block.extent.max.x() : block.extent.min.x(),
                 (corner & 2) ? block.extent.max.y() : block.extent.min.y(),
                 (corner & 4) ? block.extent.max.z() : block.extent.min.z());
    const double s = normal.dot(p - plane_pose.translation);
    below = below || s <= 0.0;
    above = above || s >= 0.0;
  }
  return below && above;
}

std::vector<CrossSection> cross_section(const TissueBlock& block, const RigidTransform& plane_pose) {
  std::vector<CrossSection> out;
  if (!plane_intersects(block, plane_pose)) {
    return out;
  }
  const Vec3 normal = plane_pose.rotation.col(0);
  const Vec3 lateral = plane_pose.rotation.col(1);
  const Vec3 depth = plane_pose.rotation.col(2);
  for (std::size_t v = 0; v < block.vessels.size(); ++v) {
    const auto& vessel = block.vessels[v];
    for (std::size_t i = 1; i < vessel.centerline.size(); ++i) {
      const Vec3& a = vessel.centerline[i - 1];
      const Vec3& b = vessel.centerline[i];
      const double sa = normal.dot(a - plane_pose.translation);
      const double sb = normal.dot(b - plane_pose.translation);
      if (!((sa <= 0.0 && sb > 0.0) || (sb <= 0.0 && sa > 0.0))) {
        continue;
      }
      const Vec3 axis = (b - a).normalized();
      const double cos_tilt = std::abs(axis.dot(normal));
      if (cos_tilt < 1e-9) {
        continue;
      }
      const Vec3 hit = a + (sa / (sa - sb)) * (b - a) - plane_pose.translation;
      CrossSection section;
      section.center_mm = Vec2(lateral.dot(hit), depth.dot(hit));
      section.diameter_mm = vessel.diameter_mm;
      section.major_axis_mm = vessel.diameter_mm / cos_tilt;
      const Vec2 in_plane(lateral.dot(axis), depth.dot(axis));
      section.major_direction = in_plane.norm() > 1e-12 ? Vec2(in_plane.normalized()) : Vec2(Vec2::UnitX());
      section.wall_thickness_mm = vessel.wall_thickness_mm;
      section.vessel_index = v;
      out.push_back(section);
    }
  }
  return out;
}

std::string_view to_string(TipState::Kind kind) {
  switch (kind) {
    case TipState::Kind::Outside:
      return "Outside";
    case TipState::Kind::InTissue:
      return "InTissue";
    case TipState::Kind::InLumen:
      return "InLumen";
    case TipState::Kind::Transfixed:
      return "Transfixed";
  }
  return "Outside";
}

TipState tip_state(const TissueBlock& block, const Vec3& tip, const Vec3& vessel_shift) {
  const Vec3 local = tip - vessel_shift;
  for (std::size_t v = 0; v < block.vessels.size(); ++v) {
    const auto& vessel = block.vessels[v];
    if (vessel.distance_to_centerline(local) < vessel.radius()) {
      return {TipState::Kind::InLumen, v};
    }
  }
  if (block.extent.contains(tip) && tip.z() < block.surface_z()) {
    return {TipState::Kind::InTissue, std::nullopt};
  }
  return {TipState::Kind::Outside, std::nullopt};
}

TipState tip_state(const TissueBlock& block, const Vec3& path_start, const Vec3& tip, const Vec3& vessel_shift) {
  const TipState here = tip_state(block, tip, vessel_shift);
  if (here.kind == TipState::Kind::InLumen) {
    return here;
  }
  const Vec3 a = path_start - vessel_shift;
  const Vec3 b = tip - vessel_shift;
  for (std::size_t v = 0; v < block.vessels.size(); ++v) {
    const auto& vessel = block.vessels[v];
    if (vessel.distance_to_segment(a, b) < vessel.radius()) {
      return {TipState::Kind::Transfixed, v};
    }
  }
  return here;
}

std::optional<double> lumen_entry_distance(const TissueBlock& block, const Vec3& origin, const Vec3& dir,
                                           double extra_mm, const Vec3& vessel_shift) {
  const Vec3 o = origin - vessel_shift;
  const Vec3 d = dir.normalized();
  double best = kInf;
  for (const auto& vessel : block.vessels) {
    const double radius = vessel.radius() + extra_mm;
    for (std::size_t i = 1; i < vessel.centerline.size(); ++i) {
      best = std::min(best, ray_cylinder(o, d, vessel.centerline[i - 1], vessel.centerline[i], radius));
      if (i + 1 < vessel.centerline.size()) {
        best = std::min(best, ray_sphere(o, d, vessel.centerline[i], radius));
      }
    }
  }
  if (best == kInf) {
    return std::nullopt;
  }
  return best;
}

}  // namespace rva
