#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>

#include <Eigen/Dense>

#include "rva/rigid_transform.hpp"

namespace rva {

inline constexpr std::size_t kArmJoints = 6;
inline constexpr std::size_t kEffectorJoints = 3;
inline constexpr std::size_t kJointCount = kArmJoints + kEffectorJoints;

/// Index of each end-effector joint inside a JointVector.
inline constexpr std::size_t kProbeSlide = 6;
inline constexpr std::size_t kNeedlePitch = 7;
inline constexpr std::size_t kNeedleInsertion = 8;

enum class JointType { Revolute, Prismatic };

std::string_view to_string(JointType type);
JointType joint_type_from_string(std::string_view name);

/// Standard Denavit–Hartenberg record, T = Rz(θ) · Tz(d) · Tx(a) · Rx(α).
/// For a revolute joint θ = theta_offset + q, for a prismatic joint d = d + q.
struct JointDescriptor {
  JointType type = JointType::Revolute;
  double a_mm = 0.0;
  double alpha_rad = 0.0;
  double d_mm = 0.0;
  double theta_offset_rad = 0.0;
  double limit_min = 0.0;
  double limit_max = 0.0;

  Mat4 transform(double q) const;
  bool operator==(const JointDescriptor&) const = default;
};

/// Joint state q: radians for revolute joints, millimetres for prismatic ones.
class JointVector {
 public:
  JointVector() { values_.fill(0.0); }
  explicit JointVector(const std::array<double, kJointCount>& values) : values_(values) {}

  /// Throws InvalidJointVector unless `values` has exactly nine entries.
  static JointVector from(std::span<const double> values);

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  std::size_t size() const { return kJointCount; }

  const std::array<double, kJointCount>& values() const { return values_; }
  Eigen::Map<const Eigen::Matrix<double, kJointCount, 1>> vec() const {
    return Eigen::Map<const Eigen::Matrix<double, kJointCount, 1>>(values_.data());
  }
  Eigen::Map<Eigen::Matrix<double, kJointCount, 1>> vec() {
    return Eigen::Map<Eigen::Matrix<double, kJointCount, 1>>(values_.data());
  }

  bool operator==(const JointVector&) const = default;

 private:
  std::array<double, kJointCount> values_{};
};

/// 6 revolute arm joints followed by the end-effector: probe slide
/// (prismatic), needle pitch (revolute) and needle insertion (prismatic).
///
/// The probe is rigidly mounted on the arm flange (`probe_mount`). The slide
/// joint moves the needle carriage relative to the probe, so in the serial
/// model it sits between the flange and the pitch joint.
class KinematicChain {
 public:
  KinematicChain(const std::array<JointDescriptor, kJointCount>& joints, const JointVector& q_home,
                 const RigidTransform& probe_mount);

  const std::array<JointDescriptor, kJointCount>& joints() const { return joints_; }
  const JointDescriptor& joint(std::size_t i) const { return joints_[i]; }
  const JointVector& q_home() const { return q_home_; }
  const RigidTransform& probe_mount() const { return probe_mount_; }

  bool within_limits(const JointVector& q, double tol = 0.0) const;
  JointVector clamp(const JointVector& q) const;

  bool operator==(const KinematicChain&) const = default;

 private:
  std::array<JointDescriptor, kJointCount> joints_;
  JointVector q_home_;
  RigidTransform probe_mount_;
};

/// Tabletop cobot (link lengths 200–400 mm) with the vascular-access
/// end-effector; q_home holds the probe vertical above the work area.
KinematicChain default_chain();

/// Needle-tip pose, the composition of all nine joint transforms.
RigidTransform forward_kinematics(const KinematicChain& chain, const JointVector& q);

/// Pose after the first `joint_count` joints (0 gives the base frame).
RigidTransform frame_pose(const KinematicChain& chain, const JointVector& q, std::size_t joint_count);

/// Probe face pose: x = elevation (image-plane normal), y = lateral, z = beam.
RigidTransform probe_pose(const KinematicChain& chain, const JointVector& q);

using Jacobian = Eigen::Matrix<double, 6, static_cast<int>(kJointCount)>;

/// Geometric Jacobian of the needle tip in the base frame. Rows 0–2 are the
/// linear velocity (mm per rad or mm per mm), rows 3–5 the angular velocity.
Jacobian jacobian(const KinematicChain& chain, const JointVector& q);

/// Which frame an IK problem drives.
enum class IkFrame { NeedleTip, Probe };

struct IkOptions {
  IkFrame frame = IkFrame::NeedleTip;
  /// Extra transform after the frame, e.g. the calibrated needle offset.
  RigidTransform tool = RigidTransform::identity();
  double damping = 1e-3;
  int max_iterations = 200;
  double translation_tolerance_mm = 1e-4;
  double rotation_tolerance_rad = 1e-5;
  /// Deterministic re-seeds tried when the seed itself does not converge.
  int restarts = 24;
};

/// Millimetres of prismatic travel weighted like one radian of rotation when
/// comparing joint vectors.
inline constexpr double kPrismaticMmPerRad = 100.0;

/// Weighted joint-space norm of a − b.
double joint_distance(const KinematicChain& chain, const JointVector& a, const JointVector& b);

/// Damped least-squares solve for `target`. The result satisfies the joint
/// limits and lies nearest to `seed` among the solutions found. Throws
/// NoConvergence or JointLimitViolation.
JointVector inverse_kinematics(const KinematicChain& chain, const RigidTransform& target,
                               const JointVector& seed, const IkOptions& options = {});

}  // namespace rva
