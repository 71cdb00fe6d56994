#include "rva/record.hpp"

#include <string>

#include "rva/errors.hpp"

namespace rva {

namespace {

constexpr std::array kOutcomes{Outcome::Success, Outcome::Miss, Outcome::Transfixed, Outcome::Aborted};

nlohmann::json optional_string(const std::optional<std::string>& s) {
  return s ? nlohmann::json(*s) : nlohmann::json(nullptr);
}

std::optional<std::string> read_optional_string(const nlohmann::json& j) {
  if (j.is_null()) {
    return std::nullopt;
  }
  return j.get<std::string>();
}

}  // namespace

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Success:
      return "Success";
    case Outcome::Miss:
      return "Miss";
    case Outcome::Transfixed:
      return "Transfixed";
    case Outcome::Aborted:
      return "Aborted";
  }
  return "?";
}

Outcome outcome_from_string(std::string_view name) {
  for (Outcome o : kOutcomes) {
    if (to_string(o) == name) {
      return o;
    }
  }
  throw ValidationError("outcome", "unknown value '" + std::string(name) + "'");
}

void to_json(nlohmann::json& j, const TrialRecord& r) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& e : r.phase_trace) {
    nlohmann::json entry = {{"attempt", e.attempt}, {"phase", to_string(e.phase)}, {"tick", e.tick}};
    if (e.reason != AbortReason::None) {
      entry["reason"] = to_string(e.reason);
    }
    trace.push_back(std::move(entry));
  }
  nlohmann::json forces = nlohmann::json::array();
  for (const auto& f : r.force_trace) {
    forces.push_back({f.attempt, f.t_s, f.force_n.x(), f.force_n.y(), f.force_n.z()});
  }
  j = nlohmann::json{
      {"trial_id", r.trial_id},
      {"scenario_seed", r.scenario_seed},
      {"scenario", to_string(r.scenario)},
      {"vessel_diameter_mm", r.vessel_diameter_mm},
      {"vessel_depth_mm", r.vessel_depth_mm},
      {"outcome", to_string(r.outcome)},
      {"abort_reason", r.abort_reason == AbortReason::None ? nlohmann::json(nullptr)
                                                          : nlohmann::json(to_string(r.abort_reason))},
      {"blood_return", r.blood_return},
      {"attempts_used", r.attempts_used},
      {"phase_trace", std::move(trace)},
      {"max_force_n", r.max_force_n},
      {"force_trace", std::move(forces)},
      {"frames", {{"pre", optional_string(r.frames.pre)}, {"post", optional_string(r.frames.post)}}},
  };
}

void from_json(const nlohmann::json& j, TrialRecord& r) {
  r.trial_id = j.at("trial_id").get<std::int64_t>();
  r.scenario_seed = j.at("scenario_seed").get<std::uint64_t>();
  r.scenario = scenario_kind_from_string(j.at("scenario").get<std::string>());
  r.vessel_diameter_mm = j.at("vessel_diameter_mm").get<double>();
  r.vessel_depth_mm = j.at("vessel_depth_mm").get<double>();
  r.outcome = outcome_from_string(j.at("outcome").get<std::string>());
  const auto& reason = j.at("abort_reason");
  r.abort_reason = reason.is_null() ? AbortReason::None : abort_reason_from_string(reason.get<std::string>());
  r.blood_return = j.at("blood_return").get<bool>();
  r.attempts_used = j.at("attempts_used").get<int>();
  r.phase_trace.clear();
  for (const auto& e : j.at("phase_trace")) {
    PhaseEntry entry;
    entry.attempt = e.at("attempt").get<int>();
    entry.phase = phase_from_string(e.at("phase").get<std::string>());
    entry.tick = e.at("tick").get<std::int64_t>();
    if (e.contains("reason")) {
      entry.reason = abort_reason_from_string(e.at("reason").get<std::string>());
    }
    r.phase_trace.push_back(entry);
  }
  r.max_force_n = j.at("max_force_n").get<double>();
  r.force_trace.clear();
  for (const auto& f : j.at("force_trace")) {
    ForceSample s;
    s.attempt = f.at(0).get<int>();
    s.t_s = f.at(1).get<double>();
    s.force_n = Vec3(f.at(2).get<double>(), f.at(3).get<double>(), f.at(4).get<double>());
    r.force_trace.push_back(s);
  }
  const auto& frames = j.at("frames");
  r.frames.pre = read_optional_string(frames.at("pre"));
  r.frames.post = read_optional_string(frames.at("post"));
}

}  // namespace rva
