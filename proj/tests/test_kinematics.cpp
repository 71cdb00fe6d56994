#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "rva/errors.hpp"
#include "rva/kinematics.hpp"

using namespace rva;

namespace {

// Reference DH composition from elementary motions, independent of the
// closed-form matrix in the library.
Eigen::Isometry3d oracle_joint(const JointDescriptor& j, double q) {
  const double theta = j.type == JointType::Revolute ? j.theta_offset_rad + q : j.theta_offset_rad;
  const double d = j.type == JointType::Prismatic ? j.d_mm + q : j.d_mm;
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  t.rotate(Eigen::AngleAxisd(theta, Eigen::Vector3d::UnitZ()));
  t.translate(Eigen::Vector3d(0.0, 0.0, d));
  t.translate(Eigen::Vector3d(j.a_mm, 0.0, 0.0));
  t.rotate(Eigen::AngleAxisd(j.alpha_rad, Eigen::Vector3d::UnitX()));
  return t;
}

Eigen::Isometry3d oracle_fk(const KinematicChain& chain, const JointVector& q) {
  Eigen::Isometry3d t = Eigen::Isometry3d::Identity();
  for (std::size_t i = 0; i < kJointCount; ++i) {
    t = t * oracle_joint(chain.joint(i), q[i]);
  }
  return t;
}

JointVector random_q(const KinematicChain& chain, std::mt19937_64& rng, double shrink = 1.0) {
  JointVector q;
  for (std::size_t i = 0; i < kJointCount; ++i) {
    const auto& j = chain.joint(i);
    const double mid = 0.5 * (j.limit_min + j.limit_max);
    const double half = 0.5 * (j.limit_max - j.limit_min) * shrink;
    q[i] = std::uniform_real_distribution<double>(mid - half, mid + half)(rng);
  }
  return q;
}

Vec3 position_error(const RigidTransform& a, const RigidTransform& b) { return a.translation - b.translation; }

}  // namespace

TEST_SUITE("kinematics") {

TEST_CASE("forward kinematics matches the elementary-motion oracle") {
  const KinematicChain chain = default_chain();
  std::mt19937_64 rng(7);
  for (int k = 0; k < 200; ++k) {
    const JointVector q = random_q(chain, rng);
    const RigidTransform fk = forward_kinematics(chain, q);
    const Eigen::Isometry3d ref = oracle_fk(chain, q);
    CHECK((fk.translation - ref.translation()).norm() < 1e-9);
    CHECK((fk.rotation - ref.rotation()).norm() < 1e-12);
    CHECK(fk.is_valid());
  }
}

TEST_CASE("home pose is frozen") {
  const KinematicChain chain = default_chain();
  const RigidTransform tip = forward_kinematics(chain, chain.q_home());
  CHECK(tip.translation.x() == doctest::Approx(-430.0).epsilon(1e-9));
  CHECK(tip.translation.y() == doctest::Approx(-151.206).epsilon(1e-6));
  CHECK(tip.translation.z() == doctest::Approx(433.160).epsilon(1e-6));

  // Probe looks straight down from the flange.
  const RigidTransform probe = probe_pose(chain, chain.q_home());
  CHECK(probe.rotation.col(2).dot(Vec3(0, 0, -1)) == doctest::Approx(1.0));
}

TEST_CASE("frame_pose is a prefix of the chain") {
  const KinematicChain chain = default_chain();
  const JointVector q = chain.q_home();
  CHECK(frame_pose(chain, q, 0).translation.norm() == 0.0);
  const RigidTransform six = frame_pose(chain, q, kArmJoints);
  RigidTransform rest;
  for (std::size_t i = kArmJoints; i < kJointCount; ++i) {
    rest = rest * RigidTransform::from_matrix(chain.joint(i).transform(q[i]));
  }
  CHECK(position_error(six * rest, forward_kinematics(chain, q)).norm() < 1e-9);
}

TEST_CASE("jacobian agrees with central differences") {
  const KinematicChain chain = default_chain();
  std::mt19937_64 rng(11);
  for (int k = 0; k < 20; ++k) {
    const JointVector q = random_q(chain, rng, 0.8);
    const Jacobian jac = jacobian(chain, q);
    for (std::size_t i = 0; i < kJointCount; ++i) {
      const double h = 1e-6;
      JointVector qp = q;
      JointVector qm = q;
      qp[i] += h;
      qm[i] -= h;
      const RigidTransform fp = forward_kinematics(chain, qp);
      const RigidTransform fm = forward_kinematics(chain, qm);
      const Vec3 lin = (fp.translation - fm.translation) / (2 * h);
      const Vec3 ang = rotation_log(fp.rotation * fm.rotation.transpose()) / (2 * h);
      const auto col = static_cast<Eigen::Index>(i);
      CHECK((jac.block<3, 1>(0, col) - lin).norm() < 1e-4 * (1.0 + lin.norm()));
      CHECK((jac.block<3, 1>(3, col) - ang).norm() < 1e-6);
    }
  }
}

TEST_CASE("IK round trip from nearby seeds") {
  const KinematicChain chain = default_chain();
  std::mt19937_64 rng(3);
  std::normal_distribution<double> jitter(0.0, 0.05);
  int solved = 0;
  for (int k = 0; k < 100; ++k) {
    const JointVector q = random_q(chain, rng, 0.5);
    const RigidTransform target = forward_kinematics(chain, q);
    JointVector seed = q;
    for (std::size_t i = 0; i < kJointCount; ++i) {
      seed[i] += chain.joint(i).type == JointType::Revolute ? jitter(rng) : 10.0 * jitter(rng);
    }
    seed = chain.clamp(seed);
    const JointVector sol = inverse_kinematics(chain, target, seed);
    const RigidTransform got = forward_kinematics(chain, sol);
    CHECK(position_error(got, target).norm() <= 0.01);
    CHECK(rotation_angle(got.rotation, target.rotation) < 1e-4);
    CHECK(chain.within_limits(sol, 1e-12));
    ++solved;
  }
  CHECK(solved == 100);
}

TEST_CASE("IK with a tool offset drives the tool frame") {
  const KinematicChain chain = default_chain();
  IkOptions options;
  options.tool = RigidTransform::translate(Vec3(0.3, -0.2, 0.5));
  JointVector q = chain.q_home();
  q[kNeedleInsertion] = 20.0;
  const RigidTransform target = forward_kinematics(chain, q) * options.tool;
  const JointVector sol = inverse_kinematics(chain, target, chain.q_home(), options);
  CHECK(position_error(forward_kinematics(chain, sol) * options.tool, target).norm() <= 0.01);
}

TEST_CASE("IK on the probe frame ignores the end-effector joints") {
  const KinematicChain chain = default_chain();
  JointVector q = chain.q_home();
  q[0] += 0.1;
  q[1] -= 0.05;
  const RigidTransform target = probe_pose(chain, q);
  IkOptions options;
  options.frame = IkFrame::Probe;
  const JointVector sol = inverse_kinematics(chain, target, chain.q_home(), options);
  CHECK(position_error(probe_pose(chain, sol), target).norm() <= 0.01);
  for (std::size_t i = kArmJoints; i < kJointCount; ++i) {
    CHECK(sol[i] == chain.q_home()[i]);
  }
}

TEST_CASE("unreachable targets throw") {
  const KinematicChain chain = default_chain();
  IkOptions options;
  options.restarts = 2;
  options.max_iterations = 50;
  const RigidTransform far = RigidTransform::translate(Vec3(5000.0, 0.0, 0.0));
  CHECK_THROWS_AS(inverse_kinematics(chain, far, chain.q_home(), options), NoConvergence);
}

TEST_CASE("invalid joint vectors and chains are rejected") {
  const std::vector<double> eight(8, 0.0);
  CHECK_THROWS_AS(JointVector::from(eight), InvalidJointVector);
  const std::vector<double> nine(9, 0.5);
  CHECK(JointVector::from(nine)[8] == 0.5);

  const KinematicChain chain = default_chain();
  auto joints = chain.joints();
  joints[kProbeSlide].type = JointType::Revolute;
  CHECK_THROWS_AS(KinematicChain(joints, chain.q_home(), chain.probe_mount()), ValidationError);

  joints = chain.joints();
  joints[2].limit_min = joints[2].limit_max;
  CHECK_THROWS_AS(KinematicChain(joints, chain.q_home(), chain.probe_mount()), ValidationError);

  JointVector out = chain.q_home();
  out[kNeedleInsertion] = 100.0;
  CHECK_THROWS_AS(KinematicChain(chain.joints(), out, chain.probe_mount()), ValidationError);
  CHECK_FALSE(chain.within_limits(out));
  CHECK(chain.clamp(out)[kNeedleInsertion] == 60.0);
}

TEST_CASE("joint distance weights prismatic travel") {
  const KinematicChain chain = default_chain();
  JointVector a;
  JointVector b;
  b[kNeedleInsertion] = kPrismaticMmPerRad;
  CHECK(joint_distance(chain, a, b) == doctest::Approx(1.0));
  b = a;
  b[0] = 0.5;
  CHECK(joint_distance(chain, a, b) == doctest::Approx(0.5));
  CHECK(joint_type_from_string(to_string(JointType::Prismatic)) == JointType::Prismatic);
  CHECK_THROWS_AS(joint_type_from_string("ball"), ValidationError);
}

}  // TEST_SUITE
