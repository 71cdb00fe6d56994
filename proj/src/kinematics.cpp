#include "rva/kinematics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "rva/errors.hpp"

namespace rva {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kRotationRowWeight = 100.0;  // mm per rad in the task-space error
constexpr double kMaxTranslationStep = 50.0;  // mm
constexpr double kMaxRotationStep = 0.5;      // rad
// Re-seeds near the caller's seed before sampling the whole joint range.
constexpr int kLocalRestarts = 4;

using Frames = std::array<Mat4, kJointCount + 1>;

void compute_frames(const KinematicChain& chain, const JointVector& q, Frames& frames,
                    std::size_t count = kJointCount) {
  frames[0] = Mat4::Identity();
  for (std::size_t i = 0; i < count; ++i) {
    frames[i + 1] = frames[i] * chain.joint(i).transform(q[i]);
  }
}

double joint_scale(const JointDescriptor& joint) {
  return joint.type == JointType::Prismatic ? kPrismaticMmPerRad : 1.0;
}

std::size_t active_joints(IkFrame frame) {
  return frame == IkFrame::Probe ? kArmJoints : kJointCount;
}

RigidTransform pose_from_frames(const KinematicChain& chain, const Frames& frames, IkFrame frame,
                                const RigidTransform& tool) {
  if (frame == IkFrame::Probe) {
    return RigidTransform::from_matrix(frames[kArmJoints]) * chain.probe_mount() * tool;
  }
  return RigidTransform::from_matrix(frames[kJointCount]) * tool;
}

struct Attempt {
  JointVector q;
  bool converged = false;
};

Attempt damped_least_squares(const KinematicChain& chain, const RigidTransform& target,
                             const JointVector& seed, const IkOptions& options, bool respect_limits) {
  const std::size_t active = active_joints(options.frame);
  const auto n = static_cast<Eigen::Index>(active);
  JointVector q = respect_limits ? chain.clamp(seed) : seed;
  Frames frames;
  Eigen::Matrix<double, 6, Eigen::Dynamic> a(6, n);
  Eigen::Matrix<double, 6, 1> err;
  const double damping_sq = options.damping * options.damping;

  for (int iter = 0; iter <= options.max_iterations; ++iter) {
    compute_frames(chain, q, frames, options.frame == IkFrame::Probe ? kArmJoints : kJointCount);
    const RigidTransform pose = pose_from_frames(chain, frames, options.frame, options.tool);
    Vec3 e_p = target.translation - pose.translation;
    Vec3 e_r = rotation_log(target.rotation * pose.rotation.transpose());
    if (e_p.norm() <= options.translation_tolerance_mm && e_r.norm() <= options.rotation_tolerance_rad) {
      return {q, true};
    }
    if (iter == options.max_iterations) {
      break;
    }
    if (const double norm = e_p.norm(); norm > kMaxTranslationStep) {
      e_p *= kMaxTranslationStep / norm;
    }
    if (const double norm = e_r.norm(); norm > kMaxRotationStep) {
      e_r *= kMaxRotationStep / norm;
    }
    err << e_p, kRotationRowWeight * e_r;

    for (std::size_t i = 0; i < active; ++i) {
      const Vec3 axis = frames[i].block<3, 1>(0, 2);
      const Vec3 origin = frames[i].block<3, 1>(0, 3);
      const double s = joint_scale(chain.joint(i));
      const auto col = static_cast<Eigen::Index>(i);
      if (chain.joint(i).type == JointType::Revolute) {
        a.block<3, 1>(0, col) = s * axis.cross(pose.translation - origin);
        a.block<3, 1>(3, col) = s * kRotationRowWeight * axis;
      } else {
        a.block<3, 1>(0, col) = s * axis;
        a.block<3, 1>(3, col).setZero();
      }
    }
    const Eigen::Matrix<double, 6, 6> normal =
        a * a.transpose() + damping_sq * Eigen::Matrix<double, 6, 6>::Identity();
    const Eigen::Matrix<double, 6, 1> y = normal.ldlt().solve(err);
    const Eigen::VectorXd step = a.transpose() * y;
    for (std::size_t i = 0; i < active; ++i) {
      q[i] += joint_scale(chain.joint(i)) * step(static_cast<Eigen::Index>(i));
    }
    if (respect_limits) {
      q = chain.clamp(q);
    }
    if (!q.vec().allFinite()) {
      return {seed, false};
    }
  }
  return {q, false};
}

}  // namespace

std::string_view to_string(JointType type) {
  return type == JointType::Revolute ? "revolute" : "prismatic";
}

JointType joint_type_from_string(std::string_view name) {
  if (name == "revolute") {
    return JointType::Revolute;
  }
  if (name == "prismatic") {
    return JointType::Prismatic;
  }
  throw ValidationError("type", "expected 'revolute' or 'prismatic', got '" + std::string(name) + "'");
}

Mat4 JointDescriptor::transform(double q) const {
  const double theta = type == JointType::Revolute ? theta_offset_rad + q : theta_offset_rad;
  const double d = type == JointType::Prismatic ? d_mm + q : d_mm;
  const double ct = std::cos(theta);
  const double st = std::sin(theta);
  const double ca = std::cos(alpha_rad);
  const double sa = std::sin(alpha_rad);
  Mat4 m;
  m << ct, -st * ca, st * sa, a_mm * ct,
       st, ct * ca, -ct * sa, a_mm * st,
       0.0, sa, ca, d,
       0.0, 0.0, 0.0, 1.0;
  return m;
}

JointVector JointVector::from(std::span<const double> values) {
  if (values.size() != kJointCount) {
    throw InvalidJointVector("joint vector needs " + std::to_string(kJointCount) + " components, got " +
                             std::to_string(values.size()));
  }
  std::array<double, kJointCount> out{};
  std::copy(values.begin(), values.end(), out.begin());
  return JointVector(out);
}

KinematicChain::KinematicChain(const std::array<JointDescriptor, kJointCount>& joints,
                               const JointVector& q_home, const RigidTransform& probe_mount)
    : joints_(joints), q_home_(q_home), probe_mount_(probe_mount) {
  for (std::size_t i = 0; i < kJointCount; ++i) {
    const auto& j = joints_[i];
    const JointType expected = (i == kProbeSlide || i == kNeedleInsertion) ? JointType::Prismatic
                                                                            : JointType::Revolute;
    const std::string key = "chain.joints[" + std::to_string(i) + "]";
    if (j.type != expected) {
      throw ValidationError(key + ".type", "expected " + std::string(to_string(expected)));
    }
    if (!(j.limit_min < j.limit_max)) {
      throw ValidationError(key + ".limit_min", "limit_min must be below limit_max");
    }
  }
  if (!within_limits(q_home_)) {
    throw ValidationError("chain.q_home", "home configuration outside joint limits");
  }
  if (!probe_mount_.is_valid()) {
    throw ValidationError("chain.probe_mount", "not a rigid transform");
  }
}

bool KinematicChain::within_limits(const JointVector& q, double tol) const {
  for (std::size_t i = 0; i < kJointCount; ++i) {
    if (q[i] < joints_[i].limit_min - tol || q[i] > joints_[i].limit_max + tol) {
      return false;
    }
  }
  return true;
}

JointVector KinematicChain::clamp(const JointVector& q) const {
  JointVector out = q;
  for (std::size_t i = 0; i < kJointCount; ++i) {
    out[i] = std::clamp(q[i], joints_[i].limit_min, joints_[i].limit_max);
  }
  return out;
}

KinematicChain default_chain() {
  const auto revolute = [](double a, double alpha, double d, double offset, double lo, double hi) {
    return JointDescriptor{JointType::Revolute, a, alpha, d, offset, lo, hi};
  };
  const auto prismatic = [](double a, double alpha, double d, double lo, double hi) {
    return JointDescriptor{JointType::Prismatic, a, alpha, d, 0.0, lo, hi};
  };
  const double deg = kPi / 180.0;
  const std::array<JointDescriptor, kJointCount> joints{
      revolute(0.0, kPi / 2, 220.0, 0.0, -kPi, kPi),
      revolute(-380.0, 0.0, 0.0, 0.0, -kPi, kPi),
      revolute(-320.0, 0.0, 0.0, 0.0, -kPi, kPi),
      revolute(0.0, kPi / 2, 130.0, 0.0, -kPi, kPi),
      revolute(0.0, -kPi / 2, 110.0, 0.0, -kPi, kPi),
      revolute(0.0, 0.0, 100.0, 0.0, -kPi, kPi),
      // Needle carriage: 40 mm behind the probe axis, 60 mm below the flange.
      prismatic(-40.0, kPi / 2, 60.0, -30.0, 30.0),
      // Pitch below the skin plane; q = 0 holds the needle horizontal.
      revolute(0.0, kPi / 2, 0.0, kPi / 2, -10.0 * deg, 80.0 * deg),
      prismatic(0.0, 0.0, 10.0, 0.0, 60.0),
  };
  const JointVector q_home({0.0, -kPi / 2, kPi / 2, -kPi / 2, -kPi / 2, 0.0, 0.0, 20.0 * deg, 10.0});
  const RigidTransform probe_mount = RigidTransform::translate(Vec3(0.0, 0.0, 80.0));
  return KinematicChain(joints, q_home, probe_mount);
}

RigidTransform frame_pose(const KinematicChain& chain, const JointVector& q, std::size_t joint_count) {
  Mat4 m = Mat4::Identity();
  for (std::size_t i = 0; i < std::min(joint_count, kJointCount); ++i) {
    m = m * chain.joint(i).transform(q[i]);
  }
  return RigidTransform::from_matrix(m);
}

RigidTransform forward_kinematics(const KinematicChain& chain, const JointVector& q) {
  return frame_pose(chain, q, kJointCount);
}

RigidTransform probe_pose(const KinematicChain& chain, const JointVector& q) {
  return frame_pose(chain, q, kArmJoints) * chain.probe_mount();
}

Jacobian jacobian(const KinematicChain& chain, const JointVector& q) {
  Frames frames;
  compute_frames(chain, q, frames);
  const Vec3 tip = frames[kJointCount].block<3, 1>(0, 3);
  Jacobian j;
  for (std::size_t i = 0; i < kJointCount; ++i) {
    const Vec3 axis = frames[i].block<3, 1>(0, 2);
    const Vec3 origin = frames[i].block<3, 1>(0, 3);
    const auto col = static_cast<Eigen::Index>(i);
    if (chain.joint(i).type == JointType::Revolute) {
      j.block<3, 1>(0, col) = axis.cross(tip - origin);
      j.block<3, 1>(3, col) = axis;
    } else {
      j.block<3, 1>(0, col) = axis;
      j.block<3, 1>(3, col).setZero();
    }
  }
  return j;
}

double joint_distance(const KinematicChain& chain, const JointVector& a, const JointVector& b) {
  double sum = 0.0;
  for (std::size_t i = 0; i < kJointCount; ++i) {
    const double d = (a[i] - b[i]) / joint_scale(chain.joint(i));
    sum += d * d;
  }
  return std::sqrt(sum);
}

JointVector inverse_kinematics(const KinematicChain& chain, const RigidTransform& target,
                               const JointVector& seed, const IkOptions& options) {
  if (Attempt first = damped_least_squares(chain, target, seed, options, true); first.converged) {
    return first.q;
  }

  // Deterministic re-seeds around the caller's seed, widening with each try.
  std::optional<JointVector> best;
  double best_distance = 0.0;
  std::mt19937_64 perturb(0x5eedULL);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  const std::size_t active = active_joints(options.frame);
  for (int k = 1; k <= options.restarts; ++k) {
    JointVector start = seed;
    for (std::size_t i = 0; i < active; ++i) {
      const auto& joint = chain.joint(i);
      if (k <= kLocalRestarts) {
        const double spread = 0.4 * k;
        const double range = joint.type == JointType::Revolute ? spread : 0.1 * spread * kPrismaticMmPerRad;
        start[i] += range * unit(perturb);
      } else {
        const double mid = 0.5 * (joint.limit_min + joint.limit_max);
        start[i] = mid + 0.5 * (joint.limit_max - joint.limit_min) * unit(perturb);
      }
    }
    const Attempt attempt = damped_least_squares(chain, target, start, options, true);
    if (!attempt.converged) {
      continue;
    }
    const double dist = joint_distance(chain, attempt.q, seed);
    if (!best || dist < best_distance) {
      best = attempt.q;
      best_distance = dist;
    }
  }
  if (best) {
    return *best;
  }

  if (const Attempt free = damped_least_squares(chain, target, seed, options, false);
      free.converged && !chain.within_limits(free.q)) {
    throw JointLimitViolation("target reachable only outside joint limits");
  }
  throw NoConvergence("inverse kinematics did not converge within " +
                      std::to_string(options.max_iterations) + " iterations");
}

}  // namespace rva
