#pragma once

#include "fema/numeric/rng.hpp"
#include "fema/types.hpp"

#include "json.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace fema::envs {

struct EnvSpec {
  std::string name;
  int state_dim = 0;
  int action_dim = 0;
  Vector action_low;
  Vector action_high;
  int max_steps = 0;
  std::string hazard;  // human-readable hazard predicate
  Vector state_scale;  // nominal per-coordinate magnitudes for embedding inputs; empty = unit

  void validate() const;
  nlohmann::json to_json() const;
  bool compatible_with(const EnvSpec& other) const;
};

struct StepResult {
  Vector next_state;
  double reward = 0.0;
  EndTag end = EndTag::none;
  bool action_clipped = false;
};

/// A stateful episode driver over a pure step function. Each instance owns
/// its random stream; replaying a seed replays the trajectory exactly.
class Env {
 public:
  virtual ~Env() = default;

  virtual const EnvSpec& spec() const = 0;

  /// Draws an initial state from the env stream and restarts the step count.
  virtual Vector reset() = 0;

  /// Advances one step. The returned tag is `time_limit` exactly when the
  /// step counter reaches EnvSpec::max_steps without a hazard.
  virtual StepResult step(const Vector& action) = 0;

  const Vector& state() const { return state_; }
  int elapsed() const { return t_; }

 protected:
  Vector state_;
  int t_ = 0;
};

/// Clips `action` into [low, high]; sets `clipped` when anything changed.
Vector clip_action(const Vector& action, const Vector& low, const Vector& high, bool& clipped);

/// Known kinds: "cliff_corridor", "tilt_pole", "grid_hazard".
std::unique_ptr<Env> make_env(std::string_view kind, std::uint64_t seed, double noise_scale = 1.0);
std::vector<std::string> env_kinds();
EnvSpec env_spec(std::string_view kind);

}  // namespace fema::envs
