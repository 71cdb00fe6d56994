#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rva/procedure.hpp"
#include "rva/record.hpp"

namespace rva {

/// One trial: calibration, then up to `max_attempts` attempts on the same
/// vessel (two for the rat scenario, one for the phantom).
struct TrialOutput {
  TrialRecord record;
  CalibrationResult calibration;
  std::vector<AttemptResult> attempts;
  std::optional<UltrasoundFrame> pre_frame;
  std::optional<UltrasoundFrame> post_frame;
};

int max_attempts(ScenarioKind kind);

/// Runs a full trial for `seed`. Never throws for procedure failures; those
/// are recorded outcomes.
TrialOutput run_attempt(ScenarioKind kind, std::uint64_t seed, const SimConfig& cfg, std::int64_t trial_id = 0,
                        const RigidTransform& true_needle_offset = RigidTransform::identity());

struct BatchSummary {
  std::int64_t n_trials = 0;
  std::int64_t first_attempt_successes = 0;
  std::int64_t overall_successes = 0;
  std::int64_t misses = 0;
  std::int64_t transfixed = 0;
  std::int64_t aborted = 0;
  double first_attempt_rate = 0.0;
  double overall_rate = 0.0;
  /// Over successful trials; absent when there are none.
  std::optional<double> mean_success_diameter_mm;
  std::optional<double> min_success_diameter_mm;

  bool operator==(const BatchSummary&) const = default;
};

/// Throws EmptyBatch.
BatchSummary summarize(const std::vector<TrialRecord>& records);

struct BatchOptions {
  /// Worker threads; 0 picks the hardware concurrency.
  unsigned workers = 0;
  /// When set, pre/post frames are written to <frames_dir>/trial_NNNN_{pre,post}.pgm
  /// and referenced from the records relative to its parent directory.
  std::optional<std::string> frames_dir;
};

struct BatchResult {
  std::vector<TrialRecord> records;
  BatchSummary summary;
};

/// Trial i uses seed base_seed + i. Deterministic for any worker count.
BatchResult run_batch(ScenarioKind kind, std::int64_t n, std::uint64_t base_seed, const SimConfig& cfg,
                      const BatchOptions& options = {});

inline constexpr const char* kLogSchema = "rva-trial/1";

/// Line-delimited JSON: a {"schema": ...} header then one record per line.
void write_log(const std::vector<TrialRecord>& records, const std::string& path);

/// Throws IoError, SchemaMismatch, ParseError.
std::vector<TrialRecord> read_log(const std::string& path);

/// Plain-text summary table of a batch.
std::string format_summary(const BatchSummary& summary);
std::string format_table(const std::vector<TrialRecord>& records);

/// Writes <out_dir>/summary.txt and, when every record has both frames,
/// <out_dir>/mosaic.pgm (one row per trial: pre | post | outcome tile).
/// Frame paths are resolved against `frames_root`. Returns true when the
/// mosaic was written.
bool render_report(const std::vector<TrialRecord>& records, const std::string& out_dir,
                   const std::string& frames_root = ".");

}  // namespace rva
