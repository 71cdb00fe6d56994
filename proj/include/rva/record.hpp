#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "rva/procedure.hpp"

namespace rva {

enum class Outcome { Success, Miss, Transfixed, Aborted };

std::string_view to_string(Outcome outcome);
Outcome outcome_from_string(std::string_view name);

/// Force sample tagged with the attempt it belongs to.
struct ForceSample {
  int attempt = 0;
  double t_s = 0.0;
  Vec3 force_n = Vec3::Zero();

  bool operator==(const ForceSample&) const = default;
};

/// Relative paths of the exported pre/post-puncture frames.
struct FramePaths {
  std::optional<std::string> pre;
  std::optional<std::string> post;

  bool operator==(const FramePaths&) const = default;
};

struct TrialRecord {
  std::int64_t trial_id = 0;
  std::uint64_t scenario_seed = 0;
  ScenarioKind scenario = ScenarioKind::Phantom;
  double vessel_diameter_mm = 0.0;
  double vessel_depth_mm = 0.0;
  Outcome outcome = Outcome::Miss;
  AbortReason abort_reason = AbortReason::None;
  /// True exactly when outcome is Success.
  bool blood_return = false;
  int attempts_used = 1;
  std::vector<PhaseEntry> phase_trace;
  double max_force_n = 0.0;
  std::vector<ForceSample> force_trace;
  FramePaths frames;

  bool first_attempt_success() const { return outcome == Outcome::Success && attempts_used == 1; }
  bool operator==(const TrialRecord&) const = default;
};

void to_json(nlohmann::json& j, const TrialRecord& record);
void from_json(const nlohmann::json& j, TrialRecord& record);

}  // namespace rva
