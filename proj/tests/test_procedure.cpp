#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "rva/errors.hpp"
#include "rva/procedure.hpp"
#include "rva/trials.hpp"

using namespace rva;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

Robot fresh_robot() {
  Robot robot;
  robot.q = robot.chain.q_home();
  return robot;
}

int count_phase(const std::vector<PhaseEntry>& trace, Phase phase) {
  int n = 0;
  for (const auto& e : trace) {
    n += e.phase == phase ? 1 : 0;
  }
  return n;
}

}  // namespace

TEST_SUITE("procedure") {

TEST_CASE("calibration with zero noise reproduces the true offset") {
  Rng rng(1);
  const RigidTransform truth = RigidTransform::translate(Vec3(0.01, 0.0, -0.02));
  const CalibrationResult r = calibrate(truth, rng, 0.0, 0.0, SafetyLimits{}.eps_cal);
  CHECK((r.t_cal.translation - truth.translation).norm() == 0.0);
  CHECK(r.distance == doctest::Approx(std::sqrt(0.0005)));
  CHECK(r.passed);
}

TEST_CASE("a 2 mm calibration bias fails the check") {
  Rng rng(2);
  const CalibrationResult r =
      calibrate(RigidTransform::translate(Vec3(2.0, 0.0, 0.0)), rng, 0.02, 0.05, SafetyLimits{}.eps_cal);
  CHECK(r.distance > 1.9);
  CHECK_FALSE(r.passed);
}

TEST_CASE("calibration passes almost always at nominal noise") {
  const ProcedureConfig pc;
  int passed = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    Rng rng = make_stream(seed, Stream::Calibration);
    passed += calibrate(RigidTransform::identity(), rng, pc.calibration_sigma_mm, pc.calibration_sigma_deg,
                        pc.limits.eps_cal)
                      .passed
                  ? 1
                  : 0;
  }
  CHECK(passed > 990);
}

TEST_CASE("trajectory arithmetic") {
  const Vec3 start(0, 0, 0);
  const Vec3 target(3, 4, 0);
  const Trajectory t = plan_trajectory(start, target, 2.0, 1.0);
  CHECK((t.v - Vec3(1.2, 1.6, 0)).norm() < 1e-12);
  CHECK(t.duration_s == doctest::Approx(3.0));
  CHECK((t.at(2.5) - target).norm() < 1e-12);
  CHECK(t.tick_count(0.01) == 300);
  CHECK((t.at_tick(300, 0.01) - t.at(3.0)).norm() < 1e-12);
  CHECK((t.at_tick(10000, 0.01) - t.at(3.0)).norm() < 1e-12);

  const Trajectory odd = plan_trajectory(start, Vec3(0, 0, 0.015), 1.0);
  CHECK(odd.tick_count(0.01) == 2);
  CHECK((odd.at_tick(2, 0.01) - Vec3(0, 0, 0.015)).norm() < 1e-15);

  CHECK_THROWS_AS(plan_trajectory(start, start, 2.0), DegenerateSegment);
  CHECK_THROWS_AS(plan_trajectory(start, target, 0.0), ValidationError);
}

TEST_CASE("needle and probe orientations") {
  const Mat3 n = needle_rotation(20.0 * kDeg);
  CHECK((n.transpose() * n - Mat3::Identity()).norm() < 1e-12);
  CHECK(n.determinant() == doctest::Approx(1.0));
  CHECK(n.col(2).y() == doctest::Approx(std::cos(20.0 * kDeg)));
  CHECK(n.col(2).z() == doctest::Approx(-std::sin(20.0 * kDeg)));
  const Mat3 p = probe_rotation();
  CHECK(p.determinant() == doctest::Approx(1.0));
  CHECK((p.col(2) - Vec3(0, 0, -1)).norm() == 0.0);
}

TEST_CASE("needle start point lies on the approach line") {
  const Vec3 target(1.0, 2.0, -3.0);
  const double pitch = 20.0 * kDeg;
  const Vec3 start = needle_start_point(target, 0.0, 0.5, pitch);
  CHECK(start.z() == doctest::Approx(0.5));
  const Vec3 d = (target - start).normalized();
  CHECK((d - Vec3(0.0, std::cos(pitch), -std::sin(pitch))).norm() < 1e-12);
}

TEST_CASE("alignment reaches the start pose within 0.01 mm") {
  const TissueBlock block = make_phantom_scenario();
  Robot robot = fresh_robot();
  const ProcedureConfig pc;
  const Vec3 target = block.vessels[0].midpoint();
  const AlignmentResult a = align_to(target, block.surface_z(), robot, pc);
  REQUIRE_FALSE(a.abort.has_value());
  CHECK((robot.believed_tip().translation - a.p_start).norm() <= 0.01);
  // The needle line through the tip passes the target.
  const RigidTransform tip = robot.believed_tip();
  const Vec3 rel = target - tip.translation;
  const Vec3 axis = tip.rotation.col(2);
  CHECK((rel - rel.dot(axis) * axis).norm() <= 0.01);
  CHECK(rotation_angle(robot.believed_tip().rotation, needle_rotation(pc.pitch_deg * kDeg)) < 1e-4);
  CHECK(a.iterations >= 1);
  CHECK(a.iterations <= pc.max_align_iterations);
}

TEST_CASE("infinite alignment tolerance stops after one solve") {
  const TissueBlock block = make_phantom_scenario();
  Robot robot = fresh_robot();
  ProcedureConfig pc;
  pc.limits.eps_align = std::numeric_limits<double>::infinity();
  const AlignmentResult a = align_to(block.vessels[0].midpoint(), block.surface_z(), robot, pc);
  CHECK_FALSE(a.abort.has_value());
  CHECK(a.iterations == 1);
}

TEST_CASE("unreachable alignment aborts") {
  Robot robot = fresh_robot();
  const AlignmentResult a = align_to(Vec3(3000.0, 0.0, 0.0), 0.0, robot, ProcedureConfig{});
  CHECK(a.abort == std::optional<AbortReason>(AbortReason::Unreachable));
}

TEST_CASE("one pixel of detection shift moves the target 0.1 mm") {
  const TissueBlock block = make_phantom_scenario();
  Robot robot = fresh_robot();
  Rng loc(1);
  Rng img(2);
  std::vector<PhaseEntry> trace;
  const PositioningResult pos = initial_positioning(block, robot, SimConfig{}, loc, img, trace, 0);
  REQUIRE_FALSE(pos.abort.has_value());
  const Vec2 c(12.0, 5.0);
  const Vec3 a = lift_detection(pos.frame, c);
  const Vec3 b = lift_detection(pos.frame, c + Vec2(pos.frame.mm_per_px, 0.0));
  const Vec3 d = lift_detection(pos.frame, c + Vec2(0.0, pos.frame.mm_per_px));
  CHECK((b - a).norm() == doctest::Approx(0.1));
  CHECK((d - a).norm() == doctest::Approx(0.1));
  CHECK((d - a).z() == doctest::Approx(-0.1));
}

TEST_CASE("positioning passes the quality gate on the phantom") {
  const TissueBlock block = make_phantom_scenario();
  Robot robot = fresh_robot();
  Rng loc = make_stream(1, Stream::Localization);
  Rng img = make_stream(1, Stream::Imaging);
  std::vector<PhaseEntry> trace;
  const PositioningResult pos = initial_positioning(block, robot, SimConfig{}, loc, img, trace, 0);
  CHECK_FALSE(pos.abort.has_value());
  CHECK(pos.quality >= 1.5);
  CHECK(pos.tries == 1);
  CHECK(static_cast<int>(trace.size()) == 1);
  CHECK((pos.probe.translation.z() - block.surface_z()) == doctest::Approx(0.0).epsilon(1e-3));
}

TEST_CASE("tenfold speckle variance exhausts the quality retries") {
  const TissueBlock block = make_phantom_scenario();
  SimConfig cfg;
  // Speckle spread is applied in dB, so variance scales with its square.
  cfg.us.speckle_scale = std::sqrt(10.0);
  Robot robot = fresh_robot();
  Rng loc = make_stream(3, Stream::Localization);
  Rng img = make_stream(3, Stream::Imaging);
  std::vector<PhaseEntry> trace;
  const PositioningResult pos = initial_positioning(block, robot, cfg, loc, img, trace, 0);
  CHECK(pos.abort == std::optional<AbortReason>(AbortReason::QualityRetriesExhausted));
  CHECK(pos.tries == cfg.procedure.max_quality_retries + 1);
  CHECK(count_phase(trace, Phase::InitialPositioning) == cfg.procedure.max_quality_retries + 1);
}

TEST_CASE("an empty block has no vessel to find") {
  TissueBlock block = make_phantom_scenario();
  block.vessels.clear();
  Robot robot = fresh_robot();
  Rng loc(1);
  Rng img(1);
  std::vector<PhaseEntry> trace;
  const PositioningResult pos = initial_positioning(block, robot, SimConfig{}, loc, img, trace, 0);
  CHECK(pos.abort == std::optional<AbortReason>(AbortReason::NoVesselFound));
}

TEST_CASE("a path 2 mm beside the vessel ends in tissue") {
  const TissueBlock block = make_phantom_scenario();
  const Vessel& v = block.vessels[0];
  const Vec3 aim = v.midpoint() + Vec3(v.radius() + 2.0, 0.0, 0.0);
  Robot robot = fresh_robot();
  ProcedureConfig pc;
  const AlignmentResult a = align_to(aim, block.surface_z(), robot, pc);
  REQUIRE_FALSE(a.abort.has_value());
  const Trajectory traj = plan_trajectory(robot.believed_tip().translation, aim, pc.speed_mm_s, 1.0);
  Rng force = make_stream(1, Stream::Force);
  std::optional<AbortReason> abort;
  const InsertionRun run = insert_run(traj, aim, 1.0, block, robot, pc, force, abort);
  CHECK_FALSE(abort.has_value());
  CHECK_FALSE(run.force_trip.has_value());
  CHECK(run.final_state.kind == TipState::Kind::InTissue);
  for (const auto& s : run.ticks) {
    CHECK(s.gate != GateResult::ForceExceeded);
  }
}

TEST_CASE("retraction reverses the insertion path") {
  const TissueBlock block = make_phantom_scenario();
  Robot robot = fresh_robot();
  ProcedureConfig pc;
  const Vec3 target = block.vessels[0].midpoint();
  REQUIRE_FALSE(align_to(target, block.surface_z(), robot, pc).abort.has_value());
  const Vec3 start = robot.believed_tip().translation;
  const JointVector q_start = robot.q;
  const Trajectory traj = plan_trajectory(start, target, pc.speed_mm_s, 1.2);
  Rng force = make_stream(2, Stream::Force);
  std::optional<AbortReason> abort;
  InsertionRun run = insert_run(traj, target, 4.0, block, robot, pc, force, abort);
  REQUIRE(run.ticks.size() > 10);
  CHECK(run.joints.size() == run.ticks.size() + 1);
  retract(run, robot);
  REQUIRE(run.retract.size() == run.joints.size());
  CHECK((run.retract.front() - run.ticks.back().commanded).norm() <= 1e-3);
  CHECK((run.retract.back() - start).norm() <= 1e-9);
  for (std::size_t i = 1; i < run.ticks.size(); ++i) {
    const Vec3& commanded = run.ticks[run.ticks.size() - 1 - i].commanded;
    CHECK((run.retract[i] - commanded).norm() <= 1e-3);
  }
  CHECK(robot.q == q_start);
}

TEST_CASE("calibration bias shifts the actual tip by -R b") {
  const TissueBlock block = make_phantom_scenario();
  const Vec3 b(0.05, -0.03, 0.08);
  Robot robot = fresh_robot();
  robot.t_cal = RigidTransform::translate(b);
  robot.t_true = RigidTransform::identity();
  const AlignmentResult a = align_to(block.vessels[0].midpoint(), block.surface_z(), robot, ProcedureConfig{});
  REQUIRE_FALSE(a.abort.has_value());
  const Mat3 r = robot.believed_tip().rotation;
  const Vec3 shift = robot.actual_tip().translation - robot.believed_tip().translation;
  CHECK((shift + r * b).norm() < 1e-9);
}

TEST_CASE("a hair-trigger force threshold exhausts the retries") {
  SimConfig cfg;
  cfg.procedure.limits.f_threshold_n = 1e-9;
  const TrialOutput out = run_attempt(ScenarioKind::Phantom, 1, cfg);
  CHECK(out.record.outcome == Outcome::Aborted);
  CHECK(out.record.abort_reason == AbortReason::MaxRetriesExceeded);
  REQUIRE(out.attempts.size() == 1);
  const auto& runs = out.attempts[0].insertion.runs;
  CHECK(runs.size() == static_cast<std::size_t>(cfg.procedure.max_insertion_retries + 1));
  for (const auto& run : runs) {
    REQUIRE(run.force_trip.has_value());
    // No further motion after the trip.
    CHECK(*run.force_trip == run.ticks.size() - 1);
    CHECK(run.joints.size() == run.ticks.size() + 1);
  }
  CHECK(is_legal_trace(out.record.phase_trace));
}

TEST_CASE("successful attempts return the arm home") {
  const SimConfig cfg;
  const TrialOutput out = run_attempt(ScenarioKind::Phantom, 4, cfg);
  REQUIRE(out.record.outcome == Outcome::Success);
  const AttemptResult& a = out.attempts.back();
  const Vec3 home = forward_kinematics(cfg.chain, cfg.chain.q_home()).translation;
  CHECK((forward_kinematics(cfg.chain, a.final_q).translation - home).norm() <= 0.01);
  CHECK(a.final_state.kind == TipState::Kind::InLumen);
  CHECK(a.post_frame.has_value());
  CHECK(out.record.blood_return);
}

TEST_CASE("transition graph") {
  CHECK(is_legal_transition(Phase::Calibration, Phase::InitialPositioning));
  CHECK(is_legal_transition(Phase::InitialPositioning, Phase::InitialPositioning));
  CHECK(is_legal_transition(Phase::Insertion, Phase::Insertion));
  CHECK(is_legal_transition(Phase::Reset, Phase::Done));
  CHECK(is_legal_transition(Phase::TargetAlignment, Phase::Aborted));
  CHECK_FALSE(is_legal_transition(Phase::Calibration, Phase::Insertion));
  CHECK_FALSE(is_legal_transition(Phase::Done, Phase::Calibration));
  CHECK_FALSE(is_legal_transition(Phase::Aborted, Phase::Aborted));
  CHECK_FALSE(is_legal_transition(Phase::Insertion, Phase::Done));

  const auto E = [](int attempt, Phase p, AbortReason r = AbortReason::None, std::int64_t tick = 0) {
    return PhaseEntry{attempt, p, r, tick};
  };
  const std::vector<PhaseEntry> good{E(0, Phase::Calibration),       E(0, Phase::InitialPositioning),
                                     E(0, Phase::TargetAlignment),   E(0, Phase::Insertion),
                                     E(0, Phase::Reset, {}, 40),     E(0, Phase::Done, {}, 40),
                                     E(1, Phase::InitialPositioning), E(1, Phase::Aborted, AbortReason::Unreachable)};
  CHECK(is_legal_trace(good));
  std::vector<PhaseEntry> bad = good;
  bad.pop_back();
  CHECK_FALSE(is_legal_trace(bad));
  bad = good;
  bad[4].tick = 0;
  bad[3].tick = 5;
  CHECK_FALSE(is_legal_trace(bad));
  bad = good;
  bad[7].reason = AbortReason::None;
  CHECK_FALSE(is_legal_trace(bad));
  bad = good;
  bad[6].phase = Phase::Calibration;
  CHECK_FALSE(is_legal_trace(bad));
  CHECK_FALSE(is_legal_trace(std::vector<PhaseEntry>{}));

  for (const Phase p : {Phase::Calibration, Phase::Insertion, Phase::Aborted}) {
    CHECK(phase_from_string(to_string(p)) == p);
  }
  CHECK(abort_reason_from_string("DeformAdjustmentsExhausted") == AbortReason::DeformAdjustmentsExhausted);
  CHECK_THROWS_AS(phase_from_string("Sleeping"), ValidationError);
}

TEST_CASE("every simulated trace is legal") {
  const SimConfig cfg;
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    const TrialOutput out = run_attempt(ScenarioKind::RatTail, seed, cfg);
    CHECK(is_legal_trace(out.record.phase_trace));
    CHECK(out.record.blood_return == (out.record.outcome == Outcome::Success));
  }
}

TEST_CASE("attempts are deterministic per seed") {
  const SimConfig cfg;
  const TrialOutput a = run_attempt(ScenarioKind::RatTail, 17, cfg);
  const TrialOutput b = run_attempt(ScenarioKind::RatTail, 17, cfg);
  CHECK(a.record == b.record);
  CHECK(a.pre_frame == b.pre_frame);
  CHECK(a.post_frame == b.post_frame);
}

TEST_CASE("procedure config validation") {
  ProcedureConfig pc;
  CHECK_NOTHROW(pc.validate());
  pc.pitch_deg = 90.0;
  CHECK_THROWS_WITH_AS(pc.validate(), doctest::Contains("safety.pitch_deg"), ValidationError);
  pc = ProcedureConfig{};
  pc.max_align_iterations = 0;
  CHECK_THROWS_AS(pc.validate(), ValidationError);
  CHECK(scenario_kind_from_string("rat") == ScenarioKind::RatTail);
  CHECK_THROWS_AS(scenario_kind_from_string("dog"), ValidationError);
}

}  // TEST_SUITE
