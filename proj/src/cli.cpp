#include "rva/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "CLI11.hpp"
#include "rva/config.hpp"
#include "rva/errors.hpp"
#include "rva/trials.hpp"

namespace rva {

namespace fs = std::filesystem;

namespace {

std::string fmt(const char* format, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

std::string vec_str(const Vec3& v) { return fmt("(%.4f, %.4f, %.4f)", v.x(), v.y(), v.z()); }

RunConfig load_config(const std::string& flag_path) {
  std::string path = flag_path;
  if (path.empty()) {
    if (const char* env = std::getenv("RVA_CONFIG"); env != nullptr && *env != '\0') {
      path = env;
    }
  }
  if (path.empty()) {
    return RunConfig{};
  }
  try {
    return parse_config(path);
  } catch (const IoError& e) {
    throw ValidationError("--config", e.what());
  }
}

struct Flags {
  std::string config;
  std::optional<std::string> scenario;
  std::optional<std::int64_t> n;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<unsigned> workers;
  std::string log;
};

int cmd_run(const Flags& flags, std::ostream& out) {
  RunConfig config = load_config(flags.config);
  if (flags.scenario) {
    config.trials.scenario = scenario_kind_from_string(*flags.scenario);
  }
  if (flags.n) {
    config.trials.n = *flags.n;
  }
  if (flags.seed) {
    config.trials.base_seed = *flags.seed;
  }
  if (flags.out) {
    config.trials.out_dir = *flags.out;
  }
  if (flags.workers) {
    config.trials.workers = *flags.workers;
  }
  config.validate();

  BatchOptions options;
  options.workers = config.trials.workers;
  const std::string out_dir = config.trials.out_dir;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    options.frames_dir = (fs::path(out_dir) / "frames").string();
  }
  const BatchResult batch =
      run_batch(config.trials.scenario, config.trials.n, config.trials.base_seed, config.sim, options);
  if (!out_dir.empty()) {
    write_log(batch.records, (fs::path(out_dir) / "trials.jsonl").string());
    render_report(batch.records, out_dir, out_dir);
  }
  out << "scenario=" << to_string(config.trials.scenario) << " n=" << config.trials.n
      << " base_seed=" << config.trials.base_seed << "\n";
  out << format_summary(batch.summary);
  return kExitOk;
}

int cmd_render(const Flags& flags, std::ostream& out) {
  RunConfig config = load_config(flags.config);
  if (flags.scenario) {
    config.trials.scenario = scenario_kind_from_string(*flags.scenario);
  }
  config.validate();
  const std::uint64_t seed = flags.seed.value_or(config.trials.base_seed);
  const TissueBlock block = make_scenario(config.trials.scenario, seed, config.sim.scenario);
  Robot robot;
  robot.chain = config.sim.chain;
  robot.q = robot.chain.q_home();
  Rng localization_rng = make_stream(seed, Stream::Localization);
  Rng imaging_rng = make_stream(seed, Stream::Imaging);
  std::vector<PhaseEntry> trace;
  const PositioningResult pos = initial_positioning(block, robot, config.sim, localization_rng, imaging_rng, trace, 0);
  if (pos.frame.pixels.empty()) {
    throw NoIntersection("no frame could be acquired: " +
                         std::string(to_string(pos.abort.value_or(AbortReason::None))));
  }
  write_pgm(pos.frame, *flags.out);
  out << "wrote " << *flags.out << " (" << pos.frame.cols << "x" << pos.frame.rows << ", Q=" << fmt("%.3f", pos.quality)
      << ")\n";
  return kExitOk;
}

int cmd_attempt(const Flags& flags, std::ostream& out) {
  RunConfig config = load_config(flags.config);
  if (flags.scenario) {
    config.trials.scenario = scenario_kind_from_string(*flags.scenario);
  }
  config.validate();
  const std::uint64_t seed = flags.seed.value_or(config.trials.base_seed);
  const TrialOutput trial = run_attempt(config.trials.scenario, seed, config.sim);
  const TrialRecord& rec = trial.record;

  out << "scenario=" << to_string(rec.scenario) << " seed=" << seed
      << fmt(" vessel_diameter_mm=%.4f vessel_depth_mm=%.4f\n", rec.vessel_diameter_mm, rec.vessel_depth_mm);
  out << fmt("calibration distance=%.6f passed=%s\n", trial.calibration.distance,
             trial.calibration.passed ? "true" : "false");
  for (const auto& a : trial.attempts) {
    out << "attempt " << a.attempt << ":\n";
    out << fmt("  positioning tries=%d Q=%.4f probe=", a.positioning.tries, a.positioning.quality)
        << vec_str(a.positioning.probe.translation) << "\n";
    if (a.alignment.iterations > 0) {
      out << "  p_target=" << vec_str(a.alignment.p_target) << " p_start=" << vec_str(a.alignment.p_start)
          << fmt(" diameter_estimate_mm=%.4f align_iterations=%d\n", a.alignment.diameter_estimate_mm,
                 a.alignment.iterations);
    }
    for (std::size_t i = 0; i < a.insertion.runs.size(); ++i) {
      const InsertionRun& run = a.insertion.runs[i];
      out << "  insertion run " << i << fmt(": ticks=%zu deform_adjustments=%d", run.ticks.size(),
                                            run.deform_adjustments)
          << " force_trip=" << (run.force_trip ? "yes" : "no") << " tip_state=" << to_string(run.final_state.kind)
          << "\n";
    }
    if (!a.insertion.runs.empty()) {
      out << "  final_tip=" << vec_str(a.insertion.final_tip) << fmt(" max_force_n=%.4f\n", a.insertion.max_force_n);
    }
  }
  out << "phase trace:\n";
  for (const auto& e : rec.phase_trace) {
    out << "  attempt=" << e.attempt << " tick=" << e.tick << " phase=" << to_string(e.phase);
    if (e.reason != AbortReason::None) {
      out << "(" << to_string(e.reason) << ")";
    }
    out << "\n";
  }
  out << "outcome=" << to_string(rec.outcome);
  if (rec.abort_reason != AbortReason::None) {
    out << "(" << to_string(rec.abort_reason) << ")";
  }
  out << " blood_return=" << (rec.blood_return ? "true" : "false") << " attempts_used=" << rec.attempts_used
      << "\n";
  return rec.outcome == Outcome::Aborted ? kExitRuntime : kExitOk;
}

int cmd_report(const Flags& flags, std::ostream& out) {
  std::vector<TrialRecord> records;
  try {
    records = read_log(flags.log);
  } catch (const IoError& e) {
    throw ValidationError("--log", e.what());
  }
  const fs::path root = fs::path(flags.log).parent_path();
  const bool mosaic = render_report(records, *flags.out, root.empty() ? "." : root.string());
  out << format_summary(summarize(records));
  out << (mosaic ? "mosaic written\n" : "no frames in log; table only\n");
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Robotic vascular access simulator", "rva"};
  app.require_subcommand(1);
  Flags flags;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", flags.config, "JSON config file (falls back to $RVA_CONFIG, then defaults)");
    sub->add_option("--seed", flags.seed, "Scenario seed (batch: base seed)");
  };
  CLI::App* run = app.add_subcommand("run", "Run a batch of trials");
  add_common(run);
  run->add_option("--scenario", flags.scenario, "phantom or rat");
  run->add_option("--n", flags.n, "Number of trials");
  run->add_option("--out", flags.out, "Output directory for log, frames and report");
  run->add_option("--workers", flags.workers, "Worker threads (0 = hardware)");

  CLI::App* render = app.add_subcommand("render", "Render the initial-positioning frame");
  add_common(render);
  render->add_option("--scenario", flags.scenario, "phantom or rat");
  render->add_option("--out", flags.out, "Output PGM file")->required();

  CLI::App* attempt = app.add_subcommand("attempt", "Run one verbose attempt");
  add_common(attempt);
  attempt->add_option("--scenario", flags.scenario, "phantom or rat");

  CLI::App* report = app.add_subcommand("report", "Regenerate the report from a trial log");
  report->add_option("--log", flags.log, "Trial log (JSONL)")->required();
  report->add_option("--out", flags.out, "Report directory")->required();

  CLI::App* defaults = app.add_subcommand("defaults", "Print the default configuration as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (run->parsed()) {
      return cmd_run(flags, out);
    }
    if (render->parsed()) {
      return cmd_render(flags, out);
    }
    if (attempt->parsed()) {
      return cmd_attempt(flags, out);
    }
    if (report->parsed()) {
      return cmd_report(flags, out);
    }
    if (defaults->parsed()) {
      out << config_to_json(RunConfig{}).dump(2) << "\n";
      return kExitOk;
    }
  } catch (const ValidationError& e) {
    err << "rva: " << e.what() << "\n";
    return kExitValidation;
  } catch (const ParseError& e) {
    err << "rva: " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "rva: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace rva
