#pragma once

#include "fema/harness/config.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace fema::harness {

namespace fs = std::filesystem;

/// Layout of a training run directory:
///   <out>/config.ini            full config echo
///   <out>/index.json            seeds and per-seed status
///   <out>/seed_<s>/config.ini   single-seed config echo
///   <out>/seed_<s>/metrics.jsonl
///   <out>/seed_<s>/checkpoint.bin
///   <out>/seed_<s>/memory.bin   (FEMA runs only)
///   <out>/seed_<s>/done.json    written last; marks the seed complete
fs::path seed_dir(const fs::path& run_dir, std::uint64_t seed);

struct SeedRunResult {
  fs::path dir;
  std::uint64_t steps = 0;
  std::uint64_t episodes = 0;
  bool reused = false;  // an identical completed run was already present
};

/// Trains one seed into `dir`. A directory holding a completed run with the
/// identical single-seed config is reused as is.
SeedRunResult run_seed(const RunConfig& cfg, std::uint64_t seed, const fs::path& dir, std::ostream* log = nullptr);

/// One run per seed (seeds shifted by `seed_offset`), plus index.json.
fs::path cmd_train(RunConfig cfg, const fs::path& out_dir, std::uint64_t seed_offset = 0, std::ostream* log = nullptr);

/// Axis names accepted by cmd_ablate and the config field each one sets.
std::vector<std::string> ablation_axes();
std::pair<std::string, std::string> ablation_field(const std::string& axis);

/// Cartesian product values x seeds; each value gets <out>/<axis>_<value>/ as
/// a run directory, plus sweep.json and the sweep report.
fs::path cmd_ablate(const RunConfig& cfg, const fs::path& out_dir, const std::string& axis,
                    const std::vector<std::string>& values, std::ostream* log = nullptr);

struct EvalEpisode {
  int episode = 0;
  double total_return = 0.0;
  int length = 0;
  EndTag end = EndTag::none;
};

/// Deterministic-policy rollouts of a checkpoint with FEMA disabled.
/// Throws FormatError when the checkpoint does not fit the environment.
std::vector<EvalEpisode> cmd_eval(const fs::path& checkpoint, const std::string& env_kind, int episodes,
                                  std::uint64_t seed);
std::string eval_table_csv(const std::vector<EvalEpisode>& rows);

}  // namespace fema::harness
