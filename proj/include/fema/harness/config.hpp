#pragma once

#include "fema/agents/ppo.hpp"
#include "fema/agents/sac.hpp"
#include "fema/embedding/embedding_stack.hpp"
#include "fema/memory/fema_config.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fema::harness {

struct ReportConfig {
  int window = 20;                     // trailing episodes in smoothed curves
  int grid = 1000;                     // step spacing of curve rows
  std::vector<std::string> length_windows;  // "lo:hi" step ranges; empty -> middle third
  double threshold_return = 0.0;       // steps-to-threshold target for efficiency tables
};

/// Everything a training run needs. Text form: INI-style sections
/// [run] [sac] [ppo] [fema] [embedding] [env] [report], one `key = value` per
/// line, `#` comments. Unknown sections and keys are rejected.
struct RunConfig {
  // [run]
  std::string agent = "sac";  // sac | ppo
  std::vector<std::uint64_t> seeds{0};
  std::uint64_t total_steps = 30000;
  std::uint64_t eval_every = 5000;
  int eval_episodes = 5;
  int jobs = 1;  // seed runs executed concurrently

  // [env]
  std::string env = "cliff_corridor";
  double noise_scale = 1.0;

  agents::SacConfig sac;
  agents::PpoConfig ppo;
  memory::FemaConfig fema;

  // [embedding]
  int z_state = 16;
  int z_action = 8;
  int phi = 32;
  int embed_hidden = 64;
  double embed_lr = 3e-4;
  int embed_epochs = 50;
  int embed_batch = 64;

  ReportConfig report;

  /// Range and consistency checks; throws ConfigError. Returns advisory warnings.
  std::vector<std::string> validate() const;

  embedding::EmbeddingConfig embedding_config(int state_dim, int action_dim) const;

  /// Canonical text; `parse_config_text(to_text())` reproduces this config.
  std::string to_text() const;

  friend bool operator==(const RunConfig&, const RunConfig&);
};

/// Parses config text; `source` names the origin in diagnostics (file:line).
RunConfig parse_config_text(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Sets one field by section and key (the same path the parser uses).
void set_config_value(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& cfg, const std::string& section, const std::string& key);

/// Applies FEMACFG_<SECTION>_<KEY>=value overrides from `env` (name -> value).
/// Unknown names under the prefix are rejected.
void apply_env_overrides(RunConfig& cfg, const std::map<std::string, std::string>& env);

/// The process environment filtered to the override prefix.
std::map<std::string, std::string> override_environment();

inline constexpr const char* kEnvOverridePrefix = "FEMACFG_";

}  // namespace fema::harness
