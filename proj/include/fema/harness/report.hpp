#pragma once

#include "fema/harness/config.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace fema::harness {

namespace fs = std::filesystem;

struct EpisodeRow {
  std::uint64_t step = 0;
  double total_return = 0.0;
  int length = 0;
  std::string end;
  double fallback_rate = 1.0;
};

struct EvalRow {
  std::uint64_t step = 0;
  double mean_return = 0.0;
};

struct SeedLog {
  std::uint64_t seed = 0;
  std::vector<EpisodeRow> episodes;
  std::vector<EvalRow> evals;
  bool complete = false;
};

/// Parses one metrics.jsonl file.
SeedLog read_seed_log(const fs::path& jsonl, std::uint64_t seed);

struct Variant {
  std::string name;
  RunConfig config;
  std::vector<SeedLog> seeds;
};

/// Loads a run directory (config.ini + seed_<s>/metrics.jsonl for each seed).
Variant load_variant(const fs::path& run_dir, const std::string& name);

struct CurvePoint {
  std::uint64_t step = 0;
  double mean_return = 0.0, std_return = 0.0;
  double mean_length = 0.0, std_length = 0.0;
  double fallback_rate = 0.0;
};

/// Seed-aggregated trailing-window curves on a step grid. A grid row appears
/// once every seed has completed at least one episode.
std::vector<CurvePoint> learning_curve(const Variant& v, int window, int grid, std::uint64_t total_steps);

/// Per-seed mean episode length over episodes ending in (lo, hi].
std::vector<double> window_lengths(const Variant& v, std::uint64_t lo, std::uint64_t hi);

/// Maximum over eval steps (present in every seed) of the seed-mean eval return.
struct MaxReturn {
  bool available = false;
  double value = 0.0;
  std::uint64_t step = 0;
};
MaxReturn max_average_return(const Variant& v);

/// First grid step at which the seed-mean curve reaches `threshold`.
std::optional<std::uint64_t> steps_to_threshold(const std::vector<CurvePoint>& curve, double threshold);

struct ReportResult {
  std::vector<std::string> variants;
  std::vector<std::optional<std::uint64_t>> steps_to_threshold;
  std::vector<std::string> warnings;
  std::string summary;
};

/// Writes curves.csv, episode_length.csv, max_return.csv, fallback.csv,
/// efficiency.csv and summary.txt into `dir` (a run or sweep directory).
/// Read-only with respect to the runs themselves.
ReportResult cmd_report(const fs::path& dir, std::optional<int> window = std::nullopt, std::ostream* log = nullptr);

}  // namespace fema::harness
