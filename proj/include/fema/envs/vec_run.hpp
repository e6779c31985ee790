#pragma once

#include "fema/envs/env.hpp"

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

namespace fema::envs {

/// What an actor returns for one decision.
struct ActOutcome {
  Vector env_action;  // applied to the environment
  Vector raw;         // the policy-space sample (stored for on-policy learners)
  double log_prob = 0.0;
  double value = 0.0;
  bool fallback = true;  // no memory guidance was applied
};

/// Called from worker threads; must only read shared state.
using ActFn = std::function<ActOutcome(std::size_t worker, const Vector& state, numeric::Rng& rng)>;

/// One environment exclusively owned by a rollout worker, plus the worker's
/// action stream and the episode in progress (episodes span rollouts).
struct RolloutWorker {
  std::unique_ptr<Env> env;
  numeric::Rng rng;
  Vector state;
  bool needs_reset = true;
  std::vector<Transition> episode;
  double episode_return = 0.0;
  std::uint64_t episode_fallbacks = 0;

  RolloutWorker(std::unique_ptr<Env> e, std::uint64_t action_seed);
};

struct StepRecord {
  Transition transition;
  ActOutcome outcome;
};

struct EpisodeRecord {
  std::size_t worker = 0;
  double total_return = 0.0;
  int length = 0;
  EndTag end = EndTag::none;
  double fallback_rate = 1.0;
  std::vector<Transition> transitions;
};

struct VecRunResult {
  std::vector<std::vector<StepRecord>> steps;  // per worker, in time order
  std::vector<EpisodeRecord> episodes;         // completed episodes, worker-major, in completion order
  std::size_t total_steps = 0;
};

/// Steps every worker concurrently (one thread each when `parallel`) until
/// `total_steps` environment steps have been taken in total. Worker i takes
/// floor(total / W) steps, plus one when i < total % W. Results are ordered
/// by worker, so output is independent of thread scheduling.
/// Throws ConfigError when worker env specs differ.
VecRunResult vec_run(std::vector<RolloutWorker>& workers, const ActFn& act, std::size_t total_steps,
                     bool parallel = true);

}  // namespace fema::envs
