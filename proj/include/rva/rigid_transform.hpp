#pragma once

#include <Eigen/Dense>

namespace rva {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Homogeneous rigid-body pose. Translation in millimetres.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_matrix(const Mat4& m);
  static RigidTransform translate(const Vec3& t);
  static RigidTransform rotate(const Mat3& r);

  Mat4 matrix() const;
  RigidTransform inverse() const;

  RigidTransform operator*(const RigidTransform& rhs) const;
  Vec3 apply(const Vec3& point) const { return rotation * point + translation; }

  /// ‖RᵀR − I‖_F ≤ tol and det R > 0.
  bool is_valid(double tol = 1e-9) const;

  /// Exact element-wise equality.
  bool operator==(const RigidTransform&) const = default;
};

/// Rotation vector (axis · angle) of R, angle in [0, π].
Vec3 rotation_log(const Mat3& r);
Mat3 rotation_exp(const Vec3& omega);
/// Geodesic angle between two rotations, radians.
double rotation_angle(const Mat3& a, const Mat3& b);

/// Combined pose distance ‖t₁ − t₂‖ + mm_per_rad · angle(R₁ᵀR₂), in
/// millimetre-equivalents.
double transform_distance(const RigidTransform& a, const RigidTransform& b,
                          double mm_per_rad = 100.0);

/// Smallest rotation taking unit vector `from` onto unit vector `to`.
Mat3 rotation_between(const Vec3& from, const Vec3& to);

}  // namespace rva
