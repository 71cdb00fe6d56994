#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "rva/kinematics.hpp"
#include "rva/phantom.hpp"
#include "rva/safety.hpp"
#include "rva/ultrasound.hpp"

namespace rva {

enum class Phase { Calibration, InitialPositioning, TargetAlignment, Insertion, Reset, Done, Aborted };

enum class AbortReason {
  None,
  CalibrationFailed,
  NoVesselFound,
  QualityRetriesExhausted,
  NoVesselDetected,
  Unreachable,
  MaxRetriesExceeded,
  DeformAdjustmentsExhausted,
};

std::string_view to_string(Phase phase);
std::string_view to_string(AbortReason reason);
Phase phase_from_string(std::string_view name);
AbortReason abort_reason_from_string(std::string_view name);

/// One state-machine entry. `tick` counts insertion ticks within the attempt.
struct PhaseEntry {
  int attempt = 0;
  Phase phase = Phase::Calibration;
  AbortReason reason = AbortReason::None;
  std::int64_t tick = 0;

  bool operator==(const PhaseEntry&) const = default;
};

bool is_legal_transition(Phase from, Phase to);

/// True when every attempt's entries form a path in the transition graph:
/// attempt 0 starts at Calibration, later attempts at InitialPositioning,
/// each ends at Done or Aborted, and nothing follows a terminal entry except
/// the start of the next attempt.
bool is_legal_trace(std::span<const PhaseEntry> trace);

/// Everything the state machine needs besides the scene and the seed.
struct ProcedureConfig {
  SafetyLimits limits;
  ForceModel force;
  int max_quality_retries = 5;
  int max_insertion_retries = 1;
  int max_align_iterations = 10;
  /// Re-aims allowed per insertion run before aborting.
  int max_deform_adjustments = 10;
  double quality_jitter_step_mm = 1.0;
  double speed_mm_s = 2.0;
  double dt_s = 0.01;
  /// Needle angle below the skin plane.
  double pitch_deg = 20.0;
  /// Overshoot past the aim point as a fraction of the detected diameter.
  double overshoot_fraction = 0.3;
  /// Height of the needle start point above the skin.
  double standoff_mm = 0.5;
  double calibration_sigma_mm = 0.02;
  double calibration_sigma_deg = 0.05;
  /// Per-attempt Gaussian tip placement error of the arm, per axis.
  double positioning_sigma_mm = 0.01;

  void validate() const;
  bool operator==(const ProcedureConfig&) const = default;
};

/// Configuration of one simulated attempt sequence.
struct SimConfig {
  KinematicChain chain = default_chain();
  ScenarioConfig scenario;
  UsConfig us;
  ProcedureConfig procedure;

  bool operator==(const SimConfig&) const = default;
};

enum class ScenarioKind { Phantom, RatTail };

std::string_view to_string(ScenarioKind kind);
ScenarioKind scenario_kind_from_string(std::string_view name);

/// Phantom geometry ignores the seed; rat-tail geometry is drawn from it.
TissueBlock make_scenario(ScenarioKind kind, std::uint64_t seed, const ScenarioConfig& config);

/// Straight-line insertion p(t) = p0 + t·v.
struct Trajectory {
  Vec3 p0 = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  double duration_s = 0.0;

  Vec3 at(double t_s) const { return p0 + t_s * v; }
  /// Position at tick k; the last tick lands exactly on p(duration).
  Vec3 at_tick(std::int64_t k, double dt_s) const;
  std::int64_t tick_count(double dt_s) const;
};

/// v = speed·(target − start)/‖target − start‖, duration covers the distance
/// plus `overshoot_mm`. Throws DegenerateSegment, ValidationError for speed.
Trajectory plan_trajectory(const Vec3& start, const Vec3& target, double speed_mm_s, double overshoot_mm = 0.0);

struct CalibrationResult {
  RigidTransform t_cal;
  RigidTransform t_expected;
  double distance = 0.0;
  bool passed = false;
};

/// Measures the needle offset: T_cal is the true offset perturbed by
/// Gaussian translation (mm) and rotation (deg) noise; passed when
/// transform_distance(T_cal, T_expected) ≤ eps_cal.
CalibrationResult calibrate(const RigidTransform& true_offset, Rng& rng, double sigma_mm, double sigma_deg,
                            double eps_cal, const RigidTransform& expected = RigidTransform::identity());

/// The arm as the controller believes it (through T_cal) and as it is.
struct Robot {
  KinematicChain chain = default_chain();
  JointVector q = chain.q_home();
  RigidTransform t_cal;
  RigidTransform t_true;
  Vec3 positioning_error = Vec3::Zero();

  RigidTransform believed_tip() const { return forward_kinematics(chain, q) * t_cal; }
  RigidTransform actual_tip() const;
};

/// Needle orientation for a given pitch: z along travel (+y, tipped down),
/// x in the travel plane, y = z × x.
Mat3 needle_rotation(double pitch_rad);

/// Probe orientation used for short-axis imaging of a vessel along +y.
Mat3 probe_rotation();

struct PositioningResult {
  std::optional<AbortReason> abort;
  RigidTransform probe;
  UltrasoundFrame frame;
  double quality = 0.0;
  int tries = 0;
};

/// Coarse localization, probe IK above it, render and quality gate with
/// lateral jitter (0, +1, −1, +2, −2, ... steps). Appends one
/// InitialPositioning entry per try.
PositioningResult initial_positioning(const TissueBlock& block, Robot& robot, const SimConfig& cfg,
                                      Rng& localization_rng, Rng& imaging_rng, std::vector<PhaseEntry>& trace,
                                      int attempt);

struct AlignmentResult {
  std::optional<AbortReason> abort;
  Vec3 p_target = Vec3::Zero();
  /// Needle start point above the skin on the line through p_target.
  Vec3 p_start = Vec3::Zero();
  double diameter_estimate_mm = 0.0;
  int iterations = 0;
};

/// Lifts a detected image point to 3-D through the frame's probe pose.
Vec3 lift_detection(const UltrasoundFrame& frame, const Vec2& center_mm);

/// Needle start point for aiming at `p_target` from `standoff` above the skin
/// plane at `skin_z` with the given pitch.
Vec3 needle_start_point(const Vec3& p_target, double skin_z, double standoff_mm, double pitch_rad);

/// Drives the believed tip to the start pose for `p_target`; repeats the IK
/// while the joint correction exceeds eps_align.
AlignmentResult align_to(const Vec3& p_target, double skin_z, Robot& robot, const ProcedureConfig& cfg);

/// Detection (with optional Gaussian aim noise) followed by align_to.
AlignmentResult align_target(const UltrasoundFrame& frame, double skin_z, Robot& robot, const SimConfig& cfg,
                             Rng& detection_rng);

/// One tick of an insertion run.
struct TickSample {
  std::int64_t tick = 0;
  Vec3 commanded = Vec3::Zero();
  Vec3 actual = Vec3::Zero();
  ForceReading force;
  Vec3 deformation = Vec3::Zero();
  GateResult gate = GateResult::Ok;
};

struct InsertionRun {
  std::vector<TickSample> ticks;
  std::vector<JointVector> joints;
  /// Tick index (into `ticks`) at which the force gate fired.
  std::optional<std::size_t> force_trip;
  int deform_adjustments = 0;
  TipState final_state;
  Vec3 final_shift = Vec3::Zero();
  /// Commanded retraction path, ending at the run's start point.
  std::vector<Vec3> retract;
};

struct InsertionResult {
  std::optional<AbortReason> abort;
  std::vector<InsertionRun> runs;
  TipState final_state;
  Vec3 final_tip = Vec3::Zero();
  Vec3 final_shift = Vec3::Zero();
  double max_force_n = 0.0;
};

/// Executes one insertion run from the robot's current pose along `traj`,
/// tracking p(t) with IK seeded at the previous tick. Stops at InLumen,
/// Transfixed, the end of the trajectory, a force trip or an abort.
/// `tick_base` offsets tick numbers; `time_base` offsets force timestamps.
InsertionRun insert_run(const Trajectory& traj, const Vec3& p_target, double diameter_estimate_mm,
                        const TissueBlock& block, Robot& robot, const ProcedureConfig& cfg, Rng& force_rng,
                        std::optional<AbortReason>& abort, std::int64_t tick_base = 0);

/// Moves the robot back along the run's commanded path, replaying its joint
/// vectors in reverse, and fills run.retract.
void retract(InsertionRun& run, Robot& robot);

/// Full insertion phase: runs, force-gate retries (re-aligning to the same
/// target) and the Insertion self-loop entries.
InsertionResult insert(const AlignmentResult& alignment, double skin_z, const TissueBlock& block, Robot& robot,
                       const ProcedureConfig& cfg, Rng& force_rng, std::vector<PhaseEntry>& trace, int attempt,
                       std::int64_t& tick);

/// Retracts the last run and returns the arm to q_home.
void reset(InsertionResult& insertion, Robot& robot);

/// Outcome of one attempt.
struct AttemptResult {
  int attempt = 0;
  std::optional<AbortReason> abort;
  TipState final_state;
  PositioningResult positioning;
  AlignmentResult alignment;
  InsertionResult insertion;
  std::optional<UltrasoundFrame> post_frame;
  JointVector final_q;
};

/// Phases InitialPositioning through Done for one attempt of a calibrated robot.
AttemptResult run_attempt_phases(const TissueBlock& block, Robot& robot, const SimConfig& cfg, std::uint64_t seed,
                                 int attempt, std::vector<PhaseEntry>& trace);

}  // namespace rva
