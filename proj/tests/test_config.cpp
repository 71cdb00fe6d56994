#include <filesystem>
#include <fstream>
#include <string>

#include "doctest.h"
#include "rva/config.hpp"
#include "rva/errors.hpp"

using namespace rva;

namespace {

std::string key_of(const std::string& text) {
  try {
    parse_config_text(text);
  } catch (const ValidationError& e) {
    return e.key();
  }
  return "<accepted>";
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("empty object yields defaults") {
  const RunConfig c = parse_config_text("{}");
  CHECK(c == RunConfig{});
  CHECK(c.sim.us.gain_db == 80.0);
  CHECK(c.sim.us.dynamic_range_db == 80.0);
  CHECK(c.sim.us.frequency_mhz == 14.2);
  CHECK(c.sim.us.probe_frequency_mhz == 12.4);
  CHECK(c.sim.us.enhancement_level == 3);
  CHECK(c.sim.us.grayscale_map == 14);
  CHECK(c.sim.us.frame_correlation == 2);
  CHECK(c.sim.us.depth_cm == 1.6);
  CHECK(c.sim.procedure.limits.f_threshold_n == 2.0);
  CHECK(c.sim.procedure.max_quality_retries == 5);
  CHECK(c.sim.procedure.max_insertion_retries == 1);
  CHECK(c.trials.scenario == ScenarioKind::RatTail);
  CHECK(c.trials.n == 40);
}

TEST_CASE("partial sections override only the given keys") {
  const RunConfig c = parse_config_text(R"({"us": {"gain_db": 60}, "trials": {"scenario": "phantom", "n": 3}})");
  CHECK(c.sim.us.gain_db == 60.0);
  CHECK(c.sim.us.dynamic_range_db == 80.0);
  CHECK(c.trials.scenario == ScenarioKind::Phantom);
  CHECK(c.trials.n == 3);
}

TEST_CASE("invalid values name their dotted key") {
  CHECK(key_of(R"({"us": {"depth_cm": -1}})") == "us.depth_cm");
  CHECK(key_of(R"({"us": {"grayscale_map": 40}})") == "us.grayscale_map");
  CHECK(key_of(R"({"us": {"gain_db": "loud"}})") == "us.gain_db");
  CHECK(key_of(R"({"safety": {"f_threshold_n": 0}})") == "safety.f_threshold_n");
  CHECK(key_of(R"({"safety": {"force": {"wall_tent_mm": 0}}})") == "safety.force.wall_tent_mm");
  CHECK(key_of(R"({"trials": {"n": 0}})") == "trials.n");
  CHECK(key_of(R"({"trials": {"scenario": "dog"}})") == "trials.scenario");
  CHECK(key_of(R"({"scenario": {"rat": {"diameter_min_mm": 2}}})") == "scenario.rat.diameter_max_mm");
  CHECK(key_of(R"({"chain": {"q_home": [0, 0]}})") == "chain.q_home");
}

TEST_CASE("unknown keys are rejected") {
  CHECK(key_of(R"({"foo": 1})") == "foo");
  CHECK(key_of(R"({"us": {"gain": 80}})") == "us.gain");
  CHECK(key_of(R"({"safety": {"force": {"bogus": 1}}})") == "safety.force.bogus");
  CHECK(key_of("[]") == "(root)");
}

TEST_CASE("syntax errors report line and column") {
  const std::string text = "{\n  \"us\": {\n    \"gain_db\": 80,,\n  }\n}\n";
  try {
    parse_config_text(text);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(e.column() == 19);  // the second comma
  }
  CHECK_THROWS_AS(parse_config_text(""), ParseError);
}

TEST_CASE("dump and parse reach a fixpoint") {
  RunConfig c;
  c.sim.us.gain_db = 72.5;
  c.sim.procedure.limits.eps_deform_mm = 0.25;
  c.sim.scenario.phantom.depth_reference = DepthReference::Centerline;
  c.trials.base_seed = 18446744073709551615ULL;
  c.trials.out_dir = "runs/a";
  const std::string once = config_to_json(c).dump(2);
  const RunConfig back = parse_config_text(once);
  CHECK(back == c);
  CHECK(config_to_json(back).dump(2) == once);
}

TEST_CASE("shipped default config equals the built-in defaults") {
  const auto path = std::filesystem::path(RVA_SOURCE_DIR) / "configs" / "rat_default.json";
  CHECK(parse_config(path.string()) == RunConfig{});
}

TEST_CASE("missing file is an I/O error") {
  CHECK_THROWS_AS(parse_config("/nonexistent/rva.json"), IoError);
}

}  // TEST_SUITE
