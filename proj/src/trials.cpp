#include "rva/trials.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "rva/errors.hpp"

namespace rva {

namespace fs = std::filesystem;

namespace {

constexpr int kTileWidth = 64;
constexpr int kGap = 4;

Outcome outcome_of(const AttemptResult& attempt) {
  if (attempt.abort) {
    return Outcome::Aborted;
  }
  switch (attempt.final_state.kind) {
    case TipState::Kind::InLumen:
      return Outcome::Success;
    case TipState::Kind::Transfixed:
      return Outcome::Transfixed;
    default:
      return Outcome::Miss;
  }
}

std::string frame_name(std::int64_t trial_id, const char* which) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "trial_%04lld_%s.pgm", static_cast<long long>(trial_id), which);
  return buf;
}

std::uint8_t tile_level(Outcome outcome) {
  switch (outcome) {
    case Outcome::Success:
      return 255;
    case Outcome::Transfixed:
      return 170;
    case Outcome::Aborted:
      return 85;
    case Outcome::Miss:
      return 0;
  }
  return 0;
}

}  // namespace

int max_attempts(ScenarioKind kind) { return kind == ScenarioKind::RatTail ? 2 : 1; }

TrialOutput run_attempt(ScenarioKind kind, std::uint64_t seed, const SimConfig& cfg, std::int64_t trial_id,
                        const RigidTransform& true_needle_offset) {
  cfg.us.validate();
  cfg.procedure.validate();
  const TissueBlock block = make_scenario(kind, seed, cfg.scenario);

  TrialOutput out;
  TrialRecord& rec = out.record;
  rec.trial_id = trial_id;
  rec.scenario_seed = seed;
  rec.scenario = kind;
  rec.vessel_diameter_mm = block.vessels.empty() ? 0.0 : block.vessels.front().diameter_mm;
  rec.vessel_depth_mm = block.skin_depth_to_vessel_mm;

  Robot robot;
  robot.chain = cfg.chain;
  robot.q = cfg.chain.q_home();
  robot.t_true = true_needle_offset;

  rec.phase_trace.push_back({0, Phase::Calibration, AbortReason::None, 0});
  Rng cal_rng = make_stream(seed, Stream::Calibration);
  const ProcedureConfig& pc = cfg.procedure;
  out.calibration = calibrate(true_needle_offset, cal_rng, pc.calibration_sigma_mm, pc.calibration_sigma_deg,
                              pc.limits.eps_cal);
  robot.t_cal = out.calibration.t_cal;
  if (!out.calibration.passed) {
    rec.phase_trace.push_back({0, Phase::Aborted, AbortReason::CalibrationFailed, 0});
    rec.outcome = Outcome::Aborted;
    rec.abort_reason = AbortReason::CalibrationFailed;
    return out;
  }

  for (int a = 0; a < max_attempts(kind); ++a) {
    AttemptResult attempt = run_attempt_phases(block, robot, cfg, seed, a, rec.phase_trace);
    rec.attempts_used = a + 1;
    rec.outcome = outcome_of(attempt);
    rec.abort_reason = attempt.abort.value_or(AbortReason::None);
    for (const auto& run : attempt.insertion.runs) {
      for (const auto& s : run.ticks) {
        rec.force_trace.push_back({a, s.force.t_s, s.force.force_n});
      }
    }
    rec.max_force_n = std::max(rec.max_force_n, attempt.insertion.max_force_n);
    if (!attempt.positioning.frame.pixels.empty()) {
      out.pre_frame = attempt.positioning.frame;
    }
    out.post_frame = attempt.post_frame;
    out.attempts.push_back(std::move(attempt));
    if (rec.outcome == Outcome::Success) {
      break;
    }
  }
  rec.blood_return = rec.outcome == Outcome::Success;
  return out;
}

BatchSummary summarize(const std::vector<TrialRecord>& records) {
  if (records.empty()) {
    throw EmptyBatch("no trial records to summarize");
  }
  BatchSummary s;
  s.n_trials = static_cast<std::int64_t>(records.size());
  double diameter_sum = 0.0;
  for (const auto& r : records) {
    switch (r.outcome) {
      case Outcome::Success:
        ++s.overall_successes;
        diameter_sum += r.vessel_diameter_mm;
        s.min_success_diameter_mm = std::min(s.min_success_diameter_mm.value_or(r.vessel_diameter_mm),
                                             r.vessel_diameter_mm);
        break;
      case Outcome::Miss:
        ++s.misses;
        break;
      case Outcome::Transfixed:
        ++s.transfixed;
        break;
      case Outcome::Aborted:
        ++s.aborted;
        break;
    }
    if (r.first_attempt_success()) {
      ++s.first_attempt_successes;
    }
  }
  s.first_attempt_rate = static_cast<double>(s.first_attempt_successes) / static_cast<double>(s.n_trials);
  s.overall_rate = static_cast<double>(s.overall_successes) / static_cast<double>(s.n_trials);
  if (s.overall_successes > 0) {
    s.mean_success_diameter_mm = diameter_sum / static_cast<double>(s.overall_successes);
  }
  return s;
}

BatchResult run_batch(ScenarioKind kind, std::int64_t n, std::uint64_t base_seed, const SimConfig& cfg,
                      const BatchOptions& options) {
  if (n < 1) {
    throw ValidationError("trials.n", "must be at least 1");
  }
  cfg.us.validate();
  cfg.procedure.validate();
  if (options.frames_dir) {
    fs::create_directories(*options.frames_dir);
  }
  const fs::path frames_dir = options.frames_dir.value_or("");
  const std::string frames_prefix = frames_dir.filename().string();

  BatchResult result;
  result.records.resize(static_cast<std::size_t>(n));
  std::atomic<std::int64_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;

  const auto worker = [&] {
    for (std::int64_t i = next++; i < n; i = next++) {
      try {
        TrialOutput out = run_attempt(kind, base_seed + static_cast<std::uint64_t>(i), cfg, i);
        if (options.frames_dir) {
          if (out.pre_frame) {
            const std::string name = frame_name(i, "pre");
            write_pgm(*out.pre_frame, (frames_dir / name).string());
            out.record.frames.pre = frames_prefix + "/" + name;
          }
          if (out.post_frame) {
            const std::string name = frame_name(i, "post");
            write_pgm(*out.post_frame, (frames_dir / name).string());
            out.record.frames.post = frames_prefix + "/" + name;
          }
        }
        result.records[static_cast<std::size_t>(i)] = std::move(out.record);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) {
          failure = std::current_exception();
        }
        next = n;
      }
    }
  };

  unsigned workers = options.workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : options.workers;
  workers = static_cast<unsigned>(std::min<std::int64_t>(workers, n));
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back(worker);
    }
  }
  if (failure) {
    std::rethrow_exception(failure);
  }
  result.summary = summarize(result.records);
  return result;
}

void write_log(const std::vector<TrialRecord>& records, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open for writing: " + path);
  }
  out << nlohmann::json{{"schema", kLogSchema}}.dump() << "\n";
  for (const auto& r : records) {
    out << nlohmann::json(r).dump() << "\n";
  }
  if (!out) {
    throw IoError("write failed: " + path);
  }
}

std::vector<TrialRecord> read_log(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open for reading: " + path);
  }
  std::vector<TrialRecord> records;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what(), line_no, e.byte);
    }
    if (!header_seen) {
      if (!j.is_object() || !j.contains("schema") || j.at("schema") != kLogSchema) {
        throw SchemaMismatch("unsupported trial log schema in " + path + ": " + j.dump());
      }
      header_seen = true;
      continue;
    }
    try {
      records.push_back(j.get<TrialRecord>());
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what(), line_no, 1);
    }
  }
  return records;
}

std::string format_summary(const BatchSummary& s) {
  std::ostringstream out;
  char buf[128];
  out << "n_trials=" << s.n_trials << "\n";
  out << "first_attempt_successes=" << s.first_attempt_successes << "\n";
  out << "overall_successes=" << s.overall_successes << "\n";
  out << "misses=" << s.misses << " transfixed=" << s.transfixed << " aborted=" << s.aborted << "\n";
  std::snprintf(buf, sizeof buf, "first_attempt_rate=%.3f\n", s.first_attempt_rate);
  out << buf;
  std::snprintf(buf, sizeof buf, "overall_rate=%.3f\n", s.overall_rate);
  out << buf;
  if (s.mean_success_diameter_mm) {
    std::snprintf(buf, sizeof buf, "mean_success_diameter_mm=%.3f\nmin_success_diameter_mm=%.3f\n",
                  *s.mean_success_diameter_mm, *s.min_success_diameter_mm);
    out << buf;
  } else {
    out << "mean_success_diameter_mm=n/a\nmin_success_diameter_mm=n/a\n";
  }
  return out.str();
}

std::string format_table(const std::vector<TrialRecord>& records) {
  std::ostringstream out;
  out << "trial  seed        diam_mm  depth_mm  attempts  outcome     blood  max_force_n\n";
  char buf[256];
  for (const auto& r : records) {
    std::string outcome(to_string(r.outcome));
    if (r.abort_reason != AbortReason::None) {
      outcome += "(" + std::string(to_string(r.abort_reason)) + ")";
    }
    std::snprintf(buf, sizeof buf, "%5lld  %-10llu  %7.3f  %8.3f  %8d  %-10s  %-5s  %11.3f\n",
                  static_cast<long long>(r.trial_id), static_cast<unsigned long long>(r.scenario_seed),
                  r.vessel_diameter_mm, r.vessel_depth_mm, r.attempts_used, outcome.c_str(),
                  r.blood_return ? "yes" : "no", r.max_force_n);
    out << buf;
  }
  return out.str();
}

bool render_report(const std::vector<TrialRecord>& records, const std::string& out_dir,
                   const std::string& frames_root) {
  fs::create_directories(out_dir);
  {
    const std::string path = (fs::path(out_dir) / "summary.txt").string();
    std::ofstream out(path, std::ios::binary);
    if (!out) {
      throw IoError("cannot open for writing: " + path);
    }
    if (!records.empty()) {
      out << format_summary(summarize(records)) << "\n";
    }
    out << format_table(records);
    if (!out) {
      throw IoError("write failed: " + path);
    }
  }

  const bool all_frames = !records.empty() && std::all_of(records.begin(), records.end(), [](const TrialRecord& r) {
    return r.frames.pre.has_value() && r.frames.post.has_value();
  });
  if (!all_frames) {
    return false;
  }

  std::vector<std::pair<UltrasoundFrame, UltrasoundFrame>> pairs;
  int row_height = 0;
  int pane_width = 0;
  for (const auto& r : records) {
    UltrasoundFrame pre = read_pgm((fs::path(frames_root) / *r.frames.pre).string());
    UltrasoundFrame post = read_pgm((fs::path(frames_root) / *r.frames.post).string());
    row_height = std::max({row_height, pre.rows, post.rows});
    pane_width = std::max({pane_width, pre.cols, post.cols});
    pairs.emplace_back(std::move(pre), std::move(post));
  }
  const int cols = 2 * pane_width + kTileWidth + 2 * kGap;
  const int rows = static_cast<int>(records.size()) * (row_height + kGap) - kGap;
  std::vector<std::uint8_t> mosaic(static_cast<std::size_t>(rows) * cols, 0);
  const auto blit = [&](const UltrasoundFrame& f, int top, int left) {
    for (int r = 0; r < f.rows; ++r) {
      for (int c = 0; c < f.cols; ++c) {
        mosaic[static_cast<std::size_t>(top + r) * cols + left + c] = f.at(r, c);
      }
    }
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const int top = static_cast<int>(i) * (row_height + kGap);
    blit(pairs[i].first, top, 0);
    blit(pairs[i].second, top, pane_width + kGap);
    const std::uint8_t level = tile_level(records[i].outcome);
    const int left = 2 * (pane_width + kGap);
    for (int r = 0; r < row_height; ++r) {
      for (int c = 0; c < kTileWidth; ++c) {
        // A 1 px mid-grey border keeps the black miss tile visible.
        const bool border = r == 0 || c == 0 || r == row_height - 1 || c == kTileWidth - 1;
        mosaic[static_cast<std::size_t>(top + r) * cols + left + c] = border ? 128 : level;
      }
    }
  }
  write_pgm(rows, cols, mosaic, (fs::path(out_dir) / "mosaic.pgm").string());
  return true;
}

}  // namespace rva
