#include "rva/rigid_transform.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rva {

RigidTransform RigidTransform::from_matrix(const Mat4& m) {
  RigidTransform t;
  t.rotation = m.topLeftCorner<3, 3>();
  t.translation = m.topRightCorner<3, 1>();
  return t;
}

RigidTransform RigidTransform::translate(const Vec3& t) {
  RigidTransform out;
  out.translation = t;
  return out;
}

RigidTransform RigidTransform::rotate(const Mat3& r) {
  RigidTransform out;
  out.rotation = r;
  return out;
}

Mat4 RigidTransform::matrix() const {
  Mat4 m = Mat4::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

RigidTransform RigidTransform::inverse() const {
  RigidTransform out;
  out.rotation = rotation.transpose();
  out.translation = -(out.rotation * translation);
  return out;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

bool RigidTransform::is_valid(double tol) const {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).norm();
  return ortho <= tol && rotation.determinant() > 0.0 && translation.allFinite();
}

Vec3 rotation_log(const Mat3& r) {
  const double cos_angle = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  const double angle = std::acos(cos_angle);
  const Vec3 skew(r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1));
  if (angle < 1e-7) {
    // First-order: R ≈ I + [ω]×.
    return 0.5 * skew;
  }
  if (std::numbers::pi - angle < 1e-6) {
    // Near π the skew part vanishes; take the axis from the symmetric part.
    const Mat3 b = 0.5 * (r + Mat3::Identity());
    Eigen::Index k = 0;
    b.diagonal().maxCoeff(&k);
    Vec3 axis = b.col(k) / std::sqrt(std::max(b(k, k), 1e-300));
    axis.normalize();
    return angle * axis;
  }
  return skew * (angle / (2.0 * std::sin(angle)));
}

Mat3 rotation_exp(const Vec3& omega) {
  const double angle = omega.norm();
  if (angle < 1e-12) {
    return Mat3::Identity();
  }
  return Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
}

double rotation_angle(const Mat3& a, const Mat3& b) {
  return rotation_log(a.transpose() * b).norm();
}

double transform_distance(const RigidTransform& a, const RigidTransform& b, double mm_per_rad) {
  return (a.translation - b.translation).norm() + mm_per_rad * rotation_angle(a.rotation, b.rotation);
}

Mat3 rotation_between(const Vec3& from, const Vec3& to) {
  return Eigen::Quaterniond::FromTwoVectors(from, to).toRotationMatrix();
}

}  // namespace rva
