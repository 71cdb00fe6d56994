#include "rva/procedure.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "rva/errors.hpp"

namespace rva {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view name, const std::array<Enum, N>& values, const char* what) {
  for (Enum v : values) {
    if (to_string(v) == name) {
      return v;
    }
  }
  throw ValidationError(what, "unknown value '" + std::string(name) + "'");
}

constexpr std::array kPhases{Phase::Calibration, Phase::InitialPositioning, Phase::TargetAlignment,
                             Phase::Insertion,   Phase::Reset,              Phase::Done,
                             Phase::Aborted};
constexpr std::array kReasons{AbortReason::None,
                              AbortReason::CalibrationFailed,
                              AbortReason::NoVesselFound,
                              AbortReason::QualityRetriesExhausted,
                              AbortReason::NoVesselDetected,
                              AbortReason::Unreachable,
                              AbortReason::MaxRetriesExceeded,
                              AbortReason::DeformAdjustmentsExhausted};

bool is_terminal(Phase p) { return p == Phase::Done || p == Phase::Aborted; }

TissueBlock shifted(const TissueBlock& block, const Vec3& shift) {
  TissueBlock out = block;
  for (auto& vessel : out.vessels) {
    for (auto& p : vessel.centerline) {
      p += shift;
    }
  }
  return out;
}

// Path depth of the tip below the skin plane along the needle axis.
double depth_below_skin(const Vec3& tip, const Vec3& axis, double skin_z) {
  const double sink = -axis.z();
  if (sink <= 1e-9) {
    return 0.0;
  }
  return std::max(0.0, (skin_z - tip.z()) / sink);
}

}  // namespace

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Calibration:
      return "Calibration";
    case Phase::InitialPositioning:
      return "InitialPositioning";
    case Phase::TargetAlignment:
      return "TargetAlignment";
    case Phase::Insertion:
      return "Insertion";
    case Phase::Reset:
      return "Reset";
    case Phase::Done:
      return "Done";
    case Phase::Aborted:
      return "Aborted";
  }
  return "?";
}

std::string_view to_string(AbortReason reason) {
  switch (reason) {
    case AbortReason::None:
      return "None";
    case AbortReason::CalibrationFailed:
      return "CalibrationFailed";
    case AbortReason::NoVesselFound:
      return "NoVesselFound";
    case AbortReason::QualityRetriesExhausted:
      return "QualityRetriesExhausted";
    case AbortReason::NoVesselDetected:
      return "NoVesselDetected";
    case AbortReason::Unreachable:
      return "Unreachable";
    case AbortReason::MaxRetriesExceeded:
      return "MaxRetriesExceeded";
    case AbortReason::DeformAdjustmentsExhausted:
      return "DeformAdjustmentsExhausted";
  }
  return "?";
}

Phase phase_from_string(std::string_view name) { return parse_enum(name, kPhases, "phase"); }

AbortReason abort_reason_from_string(std::string_view name) { return parse_enum(name, kReasons, "abort_reason"); }

std::string_view to_string(ScenarioKind kind) { return kind == ScenarioKind::Phantom ? "phantom" : "rat"; }

ScenarioKind scenario_kind_from_string(std::string_view name) {
  if (name == "phantom") {
    return ScenarioKind::Phantom;
  }
  if (name == "rat") {
    return ScenarioKind::RatTail;
  }
  throw ValidationError("scenario", "expected 'phantom' or 'rat', got '" + std::string(name) + "'");
}

TissueBlock make_scenario(ScenarioKind kind, std::uint64_t seed, const ScenarioConfig& config) {
  return kind == ScenarioKind::Phantom ? make_phantom_scenario(config) : make_rat_tail_scenario(seed, config);
}

bool is_legal_transition(Phase from, Phase to) {
  if (is_terminal(from)) {
    return false;
  }
  if (to == Phase::Aborted) {
    return true;
  }
  switch (from) {
    case Phase::Calibration:
      return to == Phase::InitialPositioning;
    case Phase::InitialPositioning:
      return to == Phase::InitialPositioning || to == Phase::TargetAlignment;
    case Phase::TargetAlignment:
      return to == Phase::Insertion;
    case Phase::Insertion:
      return to == Phase::Insertion || to == Phase::Reset;
    case Phase::Reset:
      return to == Phase::Done;
    default:
      return false;
  }
}

bool is_legal_trace(std::span<const PhaseEntry> trace) {
  if (trace.empty()) {
    return false;
  }
  int attempt = -1;
  const PhaseEntry* prev = nullptr;
  for (const auto& e : trace) {
    if (prev == nullptr || e.attempt != attempt) {
      if (prev != nullptr && (!is_terminal(prev->phase) || e.attempt != attempt + 1)) {
        return false;
      }
      const Phase first = e.attempt == 0 ? Phase::Calibration : Phase::InitialPositioning;
      if (e.phase != first || (prev == nullptr && e.attempt != 0)) {
        return false;
      }
      attempt = e.attempt;
    } else if (!is_legal_transition(prev->phase, e.phase) || e.tick < prev->tick) {
      return false;
    }
    if ((e.phase == Phase::Aborted) != (e.reason != AbortReason::None)) {
      return false;
    }
    prev = &e;
  }
  return is_terminal(prev->phase);
}

void ProcedureConfig::validate() const {
  limits.validate();
  force.validate();
  const auto non_negative = [](int v, const char* key) {
    if (v < 0) {
      throw ValidationError(key, "must be non-negative");
    }
  };
  const auto positive = [](double v, const char* key) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ValidationError(key, "must be positive");
    }
  };
  const auto non_negative_real = [](double v, const char* key) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ValidationError(key, "must be non-negative");
    }
  };
  non_negative(max_quality_retries, "safety.max_quality_retries");
  non_negative(max_insertion_retries, "safety.max_insertion_retries");
  if (max_align_iterations < 1) {
    throw ValidationError("safety.max_align_iterations", "must be at least 1");
  }
  non_negative(max_deform_adjustments, "safety.max_deform_adjustments");
  positive(quality_jitter_step_mm, "safety.quality_jitter_step_mm");
  positive(speed_mm_s, "safety.speed_mm_s");
  positive(dt_s, "safety.dt_s");
  if (!(pitch_deg > 0.0 && pitch_deg < 80.0)) {
    throw ValidationError("safety.pitch_deg", "must be in (0, 80)");
  }
  non_negative_real(overshoot_fraction, "safety.overshoot_fraction");
  non_negative_real(standoff_mm, "safety.standoff_mm");
  non_negative_real(calibration_sigma_mm, "safety.calibration_sigma_mm");
  non_negative_real(calibration_sigma_deg, "safety.calibration_sigma_deg");
  non_negative_real(positioning_sigma_mm, "safety.positioning_sigma_mm");
}

Vec3 Trajectory::at_tick(std::int64_t k, double dt_s) const {
  const double t = static_cast<double>(k) * dt_s;
  return at(std::min(t, duration_s));
}

std::int64_t Trajectory::tick_count(double dt_s) const {
  return static_cast<std::int64_t>(std::ceil(duration_s / dt_s - 1e-9));
}

Trajectory plan_trajectory(const Vec3& start, const Vec3& target, double speed_mm_s, double overshoot_mm) {
  if (!(speed_mm_s > 0.0) || !std::isfinite(speed_mm_s)) {
    throw ValidationError("speed_mm_s", "must be positive");
  }
  const Vec3 delta = target - start;
  const double distance = delta.norm();
  if (!(distance > 1e-12)) {
    throw DegenerateSegment("trajectory start equals target");
  }
  Trajectory traj;
  traj.p0 = start;
  traj.v = speed_mm_s * delta / distance;
  traj.duration_s = (distance + overshoot_mm) / speed_mm_s;
  return traj;
}

CalibrationResult calibrate(const RigidTransform& true_offset, Rng& rng, double sigma_mm, double sigma_deg,
                            double eps_cal, const RigidTransform& expected) {
  std::normal_distribution<double> unit(0.0, 1.0);
  Vec3 dt;
  Vec3 dr;
  for (int i = 0; i < 3; ++i) {
    dt[i] = sigma_mm * unit(rng);
  }
  for (int i = 0; i < 3; ++i) {
    dr[i] = sigma_deg * kDegToRad * unit(rng);
  }
  RigidTransform noise;
  noise.rotation = rotation_exp(dr);
  noise.translation = dt;

  CalibrationResult result;
  result.t_cal = true_offset * noise;
  result.t_expected = expected;
  result.distance = transform_distance(result.t_cal, expected);
  result.passed = result.distance <= eps_cal;
  return result;
}

RigidTransform Robot::actual_tip() const {
  RigidTransform pose = forward_kinematics(chain, q) * t_true;
  pose.translation += positioning_error;
  return pose;
}

Mat3 needle_rotation(double pitch_rad) {
  const double c = std::cos(pitch_rad);
  const double s = std::sin(pitch_rad);
  const Vec3 z(0.0, c, -s);
  const Vec3 x(0.0, -s, -c);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = z.cross(x);
  r.col(2) = z;
  return r;
}

Mat3 probe_rotation() {
  Mat3 r;
  r << 0.0, 1.0, 0.0,  //
      1.0, 0.0, 0.0,   //
      0.0, 0.0, -1.0;
  return r;
}

PositioningResult initial_positioning(const TissueBlock& block, Robot& robot, const SimConfig& cfg,
                                      Rng& localization_rng, Rng& imaging_rng, std::vector<PhaseEntry>& trace,
                                      int attempt) {
  PositioningResult result;
  CoarseLocalization loc;
  try {
    loc = coarse_localize(block, localization_rng, cfg.scenario.localization_sigma_mm);
  } catch (const NoVesselFound&) {
    result.abort = AbortReason::NoVesselFound;
    return result;
  }

  IkOptions probe_ik;
  probe_ik.frame = IkFrame::Probe;
  const ProcedureConfig& pc = cfg.procedure;
  for (int k = 0; k <= pc.max_quality_retries; ++k) {
    trace.push_back({attempt, Phase::InitialPositioning, AbortReason::None, 0});
    // Jitter sequence 0, +1, -1, +2, -2, ... steps across the vessel.
    const int step = (k + 1) / 2;
    const double offset = (k % 2 == 1 ? 1.0 : -1.0) * step * pc.quality_jitter_step_mm;
    RigidTransform target;
    target.rotation = probe_rotation();
    target.translation = Vec3(loc.approx_position.x() + offset, loc.approx_position.y(), block.surface_z());
    try {
      robot.q = inverse_kinematics(robot.chain, target, robot.q, probe_ik);
    } catch (const Error&) {
      result.abort = AbortReason::Unreachable;
      return result;
    }
    result.tries = k + 1;
    result.probe = probe_pose(robot.chain, robot.q);
    try {
      const UltrasoundFrame warmup = render_frame(block, result.probe, cfg.us, imaging_rng);
      result.frame = render_frame(block, result.probe, cfg.us, imaging_rng, &warmup);
      result.quality = quality_score(result.frame);
    } catch (const NoIntersection&) {
      result.quality = 0.0;
    }
    if (result.quality >= pc.limits.q_threshold) {
      return result;
    }
  }
  result.abort = AbortReason::QualityRetriesExhausted;
  return result;
}

Vec3 lift_detection(const UltrasoundFrame& frame, const Vec2& center_mm) { return image_to_world(frame, center_mm); }

Vec3 needle_start_point(const Vec3& p_target, double skin_z, double standoff_mm, double pitch_rad) {
  const Vec3 dir(0.0, std::cos(pitch_rad), -std::sin(pitch_rad));
  const double rise = skin_z + standoff_mm - p_target.z();
  return p_target - (rise / std::sin(pitch_rad)) * dir;
}

AlignmentResult align_to(const Vec3& p_target, double skin_z, Robot& robot, const ProcedureConfig& cfg) {
  AlignmentResult result;
  result.p_target = p_target;
  const double pitch = cfg.pitch_deg * kDegToRad;
  result.p_start = needle_start_point(p_target, skin_z, cfg.standoff_mm, pitch);

  RigidTransform goal;
  goal.rotation = needle_rotation(pitch);
  goal.translation = result.p_start;
  IkOptions ik;
  ik.tool = robot.t_cal;
  try {
    JointVector current = robot.q;
    for (int i = 0; i < cfg.max_align_iterations; ++i) {
      const JointVector next = inverse_kinematics(robot.chain, goal, current, ik);
      result.iterations = i + 1;
      const double correction = joint_distance(robot.chain, next, current);
      current = next;
      if (correction <= cfg.limits.eps_align || std::isinf(cfg.limits.eps_align)) {
        robot.q = current;
        return result;
      }
    }
  } catch (const Error&) {
    result.abort = AbortReason::Unreachable;
    return result;
  }
  result.abort = AbortReason::Unreachable;
  return result;
}

AlignmentResult align_target(const UltrasoundFrame& frame, double skin_z, Robot& robot, const SimConfig& cfg,
                             Rng& detection_rng) {
  Detection det;
  try {
    det = detect_vessel(frame);
  } catch (const NoVesselDetected&) {
    AlignmentResult result;
    result.abort = AbortReason::NoVesselDetected;
    return result;
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  const double nx = noise(detection_rng);
  const double ny = noise(detection_rng);
  const Vec2 aim = det.center_mm + cfg.us.detection_sigma_mm * Vec2(nx, ny);
  AlignmentResult result = align_to(lift_detection(frame, aim), skin_z, robot, cfg.procedure);
  result.diameter_estimate_mm = det.diameter_mm;
  return result;
}

InsertionRun insert_run(const Trajectory& traj, const Vec3& p_target, double diameter_estimate_mm,
                        const TissueBlock& block, Robot& robot, const ProcedureConfig& cfg, Rng& force_rng,
                        std::optional<AbortReason>& abort, std::int64_t tick_base) {
  InsertionRun run;
  const double dt = cfg.dt_s;
  const double skin_z = block.surface_z();
  const double margin = cfg.overshoot_fraction * diameter_estimate_mm;
  IkOptions ik;
  ik.tool = robot.t_cal;
  RigidTransform goal = robot.believed_tip();
  goal.rotation = needle_rotation(cfg.pitch_deg * kDegToRad);

  Trajectory path = traj;
  std::int64_t k = 0;
  std::int64_t ticks = path.tick_count(dt);
  Vec3 compensated = Vec3::Zero();
  Vec3 prev_actual = robot.actual_tip().translation;
  std::vector<ForceReading> history;
  run.joints.push_back(robot.q);

  while (k < ticks) {
    ++k;
    const std::int64_t tick = tick_base + static_cast<std::int64_t>(run.ticks.size()) + 1;
    goal.translation = path.at_tick(k, dt);
    try {
      robot.q = inverse_kinematics(robot.chain, goal, robot.q, ik);
    } catch (const Error&) {
      abort = AbortReason::Unreachable;
      return run;
    }
    run.joints.push_back(robot.q);
    const RigidTransform tip = robot.actual_tip();
    const Vec3 axis = tip.rotation.col(2);

    // Force depends on the vessel position as deformed by the previous tick.
    const Vec3 shift = run.ticks.empty() ? Vec3::Zero() : run.ticks.back().deformation;
    PunctureEvents events;
    const double depth = depth_below_skin(tip.translation, axis, skin_z);
    if (depth > 0.0) {
      const Vec3 skin_entry = tip.translation - depth * axis;
      events.wall_puncture_depth_mm = lumen_entry_distance(block, skin_entry, axis, 0.0, shift);
    }
    TickSample sample;
    sample.tick = tick;
    sample.commanded = goal.translation;
    sample.actual = tip.translation;
    sample.force = synthesize_force(static_cast<double>(tick) * dt, depth, events, force_rng, cfg.force);
    // The tissue takes the reaction of the needle force, in the base frame.
    sample.deformation = estimate_deformation(block.stiffness_K, tip.rotation * sample.force.force_n);
    history.push_back(sample.force);
    sample.gate = check_gates(history, sample.deformation - compensated, cfg.limits);
    run.ticks.push_back(sample);

    const TipState state = tip_state(block, prev_actual, tip.translation, sample.deformation);
    prev_actual = tip.translation;
    run.final_state = state;
    run.final_shift = sample.deformation;

    if (sample.gate == GateResult::ForceExceeded) {
      run.force_trip = run.ticks.size() - 1;
      return run;
    }
    if (state.kind == TipState::Kind::InLumen || state.kind == TipState::Kind::Transfixed) {
      return run;
    }
    if (sample.gate == GateResult::DeformExceeded) {
      if (run.deform_adjustments >= cfg.max_deform_adjustments) {
        abort = AbortReason::DeformAdjustmentsExhausted;
        return run;
      }
      // Re-aim from here at the target displaced with the tissue.
      ++run.deform_adjustments;
      compensated = sample.deformation;
      const Vec3 aim = p_target + compensated;
      try {
        path = plan_trajectory(goal.translation, aim, cfg.speed_mm_s, margin);
      } catch (const DegenerateSegment&) {
        return run;
      }
      k = 0;
      ticks = path.tick_count(dt);
    }
  }
  return run;
}

void retract(InsertionRun& run, Robot& robot) {
  run.retract.clear();
  for (auto it = run.joints.rbegin(); it != run.joints.rend(); ++it) {
    robot.q = *it;
    run.retract.push_back(robot.believed_tip().translation);
  }
}

InsertionResult insert(const AlignmentResult& alignment, double skin_z, const TissueBlock& block, Robot& robot,
                       const ProcedureConfig& cfg, Rng& force_rng, std::vector<PhaseEntry>& trace, int attempt,
                       std::int64_t& tick) {
  InsertionResult result;
  AlignmentResult aim = alignment;
  for (int retry = 0;; ++retry) {
    trace.push_back({attempt, Phase::Insertion, AbortReason::None, tick});
    const double margin = cfg.overshoot_fraction * aim.diameter_estimate_mm;
    const Trajectory traj =
        plan_trajectory(robot.believed_tip().translation, aim.p_target, cfg.speed_mm_s, margin);
    InsertionRun run =
        insert_run(traj, aim.p_target, aim.diameter_estimate_mm, block, robot, cfg, force_rng, result.abort, tick);
    tick += static_cast<std::int64_t>(run.ticks.size());
    for (const auto& s : run.ticks) {
      result.max_force_n = std::max(result.max_force_n, s.force.force_n.norm());
    }
    result.final_state = run.final_state;
    result.final_shift = run.final_shift;
    result.final_tip = run.ticks.empty() ? robot.actual_tip().translation : run.ticks.back().actual;
    const bool tripped = run.force_trip.has_value();
    result.runs.push_back(std::move(run));
    if (result.abort || !tripped) {
      return result;
    }
    if (retry >= cfg.max_insertion_retries) {
      result.abort = AbortReason::MaxRetriesExceeded;
      return result;
    }
    retract(result.runs.back(), robot);
    const double diameter = aim.diameter_estimate_mm;
    aim = align_to(aim.p_target, skin_z, robot, cfg);
    aim.diameter_estimate_mm = diameter;
    if (aim.abort) {
      result.abort = aim.abort;
      return result;
    }
  }
}

void reset(InsertionResult& insertion, Robot& robot) {
  if (!insertion.runs.empty()) {
    retract(insertion.runs.back(), robot);
  }
  robot.q = robot.chain.q_home();
}

AttemptResult run_attempt_phases(const TissueBlock& block, Robot& robot, const SimConfig& cfg, std::uint64_t seed,
                                 int attempt, std::vector<PhaseEntry>& trace) {
  AttemptResult result;
  result.attempt = attempt;
  const auto a = static_cast<std::uint32_t>(attempt);
  Rng localization_rng = make_stream(seed, Stream::Localization, a);
  Rng imaging_rng = make_stream(seed, Stream::Imaging, a);
  Rng detection_rng = make_stream(seed, Stream::Detection, a);
  Rng force_rng = make_stream(seed, Stream::Force, a);
  Rng positioning_rng = make_stream(seed, Stream::Positioning, a);

  std::normal_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < 3; ++i) {
    robot.positioning_error[i] = cfg.procedure.positioning_sigma_mm * unit(positioning_rng);
  }
  std::int64_t tick = 0;
  const auto abort_with = [&](AbortReason reason) {
    result.abort = reason;
    trace.push_back({attempt, Phase::Aborted, reason, tick});
    result.final_q = robot.q;
    return result;
  };

  result.positioning = initial_positioning(block, robot, cfg, localization_rng, imaging_rng, trace, attempt);
  if (result.positioning.abort) {
    return abort_with(*result.positioning.abort);
  }

  trace.push_back({attempt, Phase::TargetAlignment, AbortReason::None, tick});
  const double skin_z = result.positioning.probe.translation.z();
  result.alignment = align_target(result.positioning.frame, skin_z, robot, cfg, detection_rng);
  if (result.alignment.abort) {
    return abort_with(*result.alignment.abort);
  }

  result.insertion =
      insert(result.alignment, skin_z, block, robot, cfg.procedure, force_rng, trace, attempt, tick);
  result.final_state = result.insertion.final_state;
  if (result.insertion.abort) {
    return abort_with(*result.insertion.abort);
  }

  trace.push_back({attempt, Phase::Reset, AbortReason::None, tick});
  // Post-puncture image: same probe pose, tissue as deformed at the end of
  // insertion, needle tip overlaid.
  const TissueBlock deformed = shifted(block, result.insertion.final_shift);
  try {
    const UltrasoundFrame fresh =
        render_frame(deformed, result.positioning.probe, cfg.us, imaging_rng, &result.positioning.frame);
    result.post_frame = render_needle(fresh, result.insertion.final_tip);
  } catch (const NoIntersection&) {
    result.post_frame.reset();
  }
  reset(result.insertion, robot);
  result.final_q = robot.q;
  trace.push_back({attempt, Phase::Done, AbortReason::None, tick});
  return result;
}

}  // namespace rva
