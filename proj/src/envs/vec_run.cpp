#include "fema/envs/vec_run.hpp"

#include "fema/error.hpp"

#include <cmath>
#include <exception>
#include <thread>

namespace fema::envs {

RolloutWorker::RolloutWorker(std::unique_ptr<Env> e, std::uint64_t action_seed)
    : env(std::move(e)), rng(action_seed) {}

namespace {

void run_worker(std::size_t w, RolloutWorker& worker, const ActFn& act, std::size_t steps,
                std::vector<StepRecord>& out_steps, std::vector<EpisodeRecord>& out_episodes) {
  out_steps.reserve(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    if (worker.needs_reset) {
      worker.state = worker.env->reset();
      worker.needs_reset = false;
      worker.episode.clear();
      worker.episode_return = 0.0;
      worker.episode_fallbacks = 0;
    }
    ActOutcome outcome = act(w, worker.state, worker.rng);
    StepResult r = worker.env->step(outcome.env_action);
    if (!std::isfinite(r.reward) || !r.next_state.allFinite()) throw RunError("environment produced non-finite values");
    Transition tr{worker.state, outcome.env_action, r.reward, r.next_state, r.end};
    worker.episode.push_back(tr);
    worker.episode_return += r.reward;
    if (outcome.fallback) ++worker.episode_fallbacks;
    out_steps.push_back(StepRecord{std::move(tr), std::move(outcome)});
    worker.state = r.next_state;
    if (r.end != EndTag::none) {
      EpisodeRecord ep;
      ep.worker = w;
      ep.total_return = worker.episode_return;
      ep.length = static_cast<int>(worker.episode.size());
      ep.end = r.end;
      ep.fallback_rate = static_cast<double>(worker.episode_fallbacks) / static_cast<double>(ep.length);
      ep.transitions = std::move(worker.episode);
      out_episodes.push_back(std::move(ep));
      worker.needs_reset = true;
    }
  }
}

}  // namespace

VecRunResult vec_run(std::vector<RolloutWorker>& workers, const ActFn& act, std::size_t total_steps,
                     bool parallel) {
  if (workers.empty()) throw ConfigError("vec_run: no workers");
  for (const auto& w : workers) {
    if (!w.env) throw ConfigError("vec_run: worker without environment");
    if (!w.env->spec().compatible_with(workers.front().env->spec()))
      throw ConfigError("vec_run: heterogeneous environment specs");
  }
  const std::size_t n = workers.size();
  VecRunResult result;
  result.steps.resize(n);
  std::vector<std::vector<EpisodeRecord>> episodes(n);
  std::vector<std::exception_ptr> errors(n);
  auto budget = [&](std::size_t i) { return total_steps / n + (i < total_steps % n ? 1 : 0); };

  auto body = [&](std::size_t i) {
    try {
      run_worker(i, workers[i], act, budget(i), result.steps[i], episodes[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (parallel && n > 1) {
    std::vector<std::thread> threads;
    threads.reserve(n);
    for (std::size_t i = 0; i < n; ++i) threads.emplace_back(body, i);
    for (auto& t : threads) t.join();
  } else {
    for (std::size_t i = 0; i < n; ++i) body(i);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  for (std::size_t i = 0; i < n; ++i) {
    result.total_steps += result.steps[i].size();
    for (auto& ep : episodes[i]) result.episodes.push_back(std::move(ep));
  }
  return result;
}

}  // namespace fema::envs
