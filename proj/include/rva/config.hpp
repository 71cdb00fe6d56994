#pragma once

#include <cstdint>
#include <string>

#include "json.hpp"
#include "rva/procedure.hpp"

namespace rva {

struct TrialsConfig {
  ScenarioKind scenario = ScenarioKind::RatTail;
  std::int64_t n = 40;
  std::uint64_t base_seed = 41;
  /// Empty: batch results go to stdout only.
  std::string out_dir;
  /// 0 picks the hardware concurrency.
  unsigned workers = 0;

  bool operator==(const TrialsConfig&) const = default;
};

/// Every tunable of the simulator. Sections map one-to-one onto the JSON
/// objects "chain", "scenario", "us", "safety" and "trials".
struct RunConfig {
  SimConfig sim;
  TrialsConfig trials;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Strict parse: absent keys take defaults, unknown keys are rejected.
/// Throws ParseError (with line and column) or ValidationError (with the
/// dotted key path).
RunConfig parse_config_text(const std::string& text);

/// Throws IoError when the file cannot be read, else as parse_config_text.
RunConfig parse_config(const std::string& path);

/// Full JSON form; parse_config_text(dump) yields an equal config.
nlohmann::json config_to_json(const RunConfig& config);

}  // namespace rva
