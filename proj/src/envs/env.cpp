#include "fema/envs/env.hpp"

#include "fema/envs/cliff_corridor.hpp"
#include "fema/envs/grid_hazard.hpp"
#include "fema/envs/tilt_pole.hpp"
#include "fema/error.hpp"

#include <cmath>

namespace fema::envs {

void EnvSpec::validate() const {
  if (state_dim < 1 || action_dim < 1) throw ConfigError("EnvSpec " + name + ": widths must be >= 1");
  if (action_low.size() != action_dim || action_high.size() != action_dim)
    throw ConfigError("EnvSpec " + name + ": action bounds width mismatch");
  if (!action_low.allFinite() || !action_high.allFinite() || (action_low.array() > action_high.array()).any())
    throw ConfigError("EnvSpec " + name + ": action bounds must be finite and ordered");
  if (max_steps < 1) throw ConfigError("EnvSpec " + name + ": max_steps must be >= 1");
  if (state_scale.size() != 0 && (state_scale.size() != state_dim || !(state_scale.array() > 0.0).all()))
    throw ConfigError("EnvSpec " + name + ": state_scale must be empty or positive with one entry per state");
}

nlohmann::json EnvSpec::to_json() const {
  auto vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return {{"name", name},
          {"state_dim", state_dim},
          {"action_dim", action_dim},
          {"action_low", vec(action_low)},
          {"action_high", vec(action_high)},
          {"max_steps", max_steps},
          {"hazard", hazard},
          {"state_scale", vec(state_scale)}};
}

bool EnvSpec::compatible_with(const EnvSpec& o) const {
  return name == o.name && state_dim == o.state_dim && action_dim == o.action_dim &&
         action_low == o.action_low && action_high == o.action_high && max_steps == o.max_steps;
}

Vector clip_action(const Vector& action, const Vector& low, const Vector& high, bool& clipped) {
  numeric::require_width(action, low.size(), "action");
  Vector out = action.cwiseMax(low).cwiseMin(high);
  clipped = (out.array() != action.array()).any();
  if (!action.allFinite()) throw RunError("non-finite action");
  return out;
}

std::unique_ptr<Env> make_env(std::string_view kind, std::uint64_t seed, double noise_scale) {
  if (kind == "cliff_corridor") {
    CliffParams p;
    p.noise *= noise_scale;
    return std::make_unique<CliffCorridor>(seed, p);
  }
  if (kind == "tilt_pole") {
    TiltPoleParams p;
    p.noise *= noise_scale;
    return std::make_unique<TiltPole>(seed, p);
  }
  if (kind == "grid_hazard") return std::make_unique<GridHazard>();
  throw ConfigError("unknown environment kind '" + std::string(kind) + "'");
}

std::vector<std::string> env_kinds() { return {"cliff_corridor", "tilt_pole", "grid_hazard"}; }

EnvSpec env_spec(std::string_view kind) { return make_env(kind, 0)->spec(); }

}  // namespace fema::envs
