#pragma once

#include "fema/agents/episode.hpp"
#include "fema/agents/fema_hook.hpp"
#include "fema/agents/policies.hpp"
#include "fema/envs/env.hpp"
#include "fema/envs/vec_run.hpp"
#include "fema/numeric/adam.hpp"
#include "fema/numeric/binary_io.hpp"

#include <memory>
#include <vector>

namespace fema::agents {

struct PpoConfig {
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double clip_ratio = 0.2;
  double lr = 3e-4;
  int epochs = 10;
  int minibatch_size = 64;
  int rollout_steps = 2048;  // per rollout phase, summed over workers
  int workers = 4;
  double vf_coef = 0.5;
  double ent_coef = 0.0;
  double target_kl = 0.02;  // epochs stop once the batch KL exceeds 1.5x this
  double init_log_std = 0.0;
  int hidden_width = 64;
  bool importance_correction = false;
  bool parallel = true;

  void validate() const;
};

struct PpoNets {
  numeric::Mlp mean_net;
  numeric::Mlp value;
  Vector log_std;

  static PpoNets init(int state_dim, int action_dim, int hidden, double init_log_std, std::uint64_t seed);
  friend bool operator==(const PpoNets&, const PpoNets&) = default;
};

/// One on-policy slab. `actions` are the unclipped policy samples.
struct PpoBatch {
  Matrix states;
  Matrix actions;
  Vector log_prob_old;
  Vector advantages;
  Vector returns;
  std::vector<bool> fema_selected;  // action chosen by FEMA scoring rather than a plain draw

  Eigen::Index size() const { return states.cols(); }
  PpoBatch subset(const std::vector<Eigen::Index>& idx) const;
};

struct PpoGrads {
  numeric::MlpGrads mean;
  numeric::MlpGrads value;
  Vector log_std;
};

struct PpoLossParts {
  double policy = 0.0;
  double value = 0.0;
  double entropy = 0.0;
  double total = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
};

struct PpoLossSettings {
  double clip_ratio = 0.2;
  double vf_coef = 0.5;
  double ent_coef = 0.0;
  bool mask_fema = false;  // drop FEMA-selected samples from the surrogate
};

/// Clipped surrogate + value regression - entropy bonus, with gradients.
PpoLossParts ppo_loss(const PpoNets& nets, const PpoBatch& batch, const PpoLossSettings& settings, PpoGrads* grads);

/// Generalized advantage estimates for one worker's time-ordered steps.
/// `terminal` stops bootstrapping (hazard); `episode_end` stops the recursion
/// (hazard or time limit). `next_values` are V(s_{t+1}).
Vector gae(const Vector& rewards, const Vector& values, const Vector& next_values, const std::vector<bool>& terminal,
           const std::vector<bool>& episode_end, double gamma, double lambda);

/// (x - mean) / (std + 1e-8), population std.
Vector normalize_advantages(const Vector& adv);

class PpoAgent {
 public:
  PpoAgent(const envs::EnvSpec& spec, const PpoConfig& cfg, std::uint64_t seed);

  const PpoConfig& config() const { return cfg_; }
  const envs::EnvSpec& env_spec() const { return spec_; }
  const PpoNets& nets() const { return nets_; }
  PpoNets& mutable_nets() { return nets_; }

  DiagGaussianPolicy policy() const {
    return DiagGaussianPolicy(nets_.mean_net, nets_.log_std, spec_.action_low, spec_.action_high);
  }

  /// Executed action (FEMA-selected when the hook is enabled), its
  /// log-density under the current policy, and the state value.
  envs::ActOutcome act(const Vector& s, numeric::Rng& rng, const FemaHook* hook) const;
  Vector act_eval(const Vector& s) const;
  double value(const Vector& s) const;

  /// Epochs of shuffled minibatch updates with KL early stopping.
  LossSummary update(const PpoBatch& batch, numeric::Rng& rng);

  void write(numeric::BinaryWriter& w) const;
  void read(numeric::BinaryReader& r);

 private:
  envs::EnvSpec spec_;
  PpoConfig cfg_;
  PpoNets nets_;
  numeric::AdamState adam_mean_, adam_value_;
  numeric::VectorAdam adam_log_std_;
};

/// Vectorized PPO-lite loop. Failure events from a rollout are staged in
/// worker order after the rollout; memory updates run between rollouts.
class PpoTrainer {
 public:
  PpoTrainer(std::vector<std::unique_ptr<envs::Env>> envs, const PpoConfig& cfg, std::unique_ptr<FemaHook> hook,
             std::uint64_t seed);

  /// Runs rollout/update phases until `total_steps` environment steps. Episodes
  /// still open at the end are reported with end tag `none`.
  void train(std::uint64_t total_steps, const EpisodeSink& on_episode, const LossSink& on_loss = {});

  /// One rollout phase of `steps` environment steps followed by an update.
  std::vector<EpisodeSummary> iterate(std::size_t steps, const LossSink& on_loss = {});

  /// Reports the episodes still open (end tag `none`) and closes them.
  std::vector<EpisodeSummary> finish();

  std::uint64_t steps() const { return steps_; }
  std::uint64_t episodes() const { return episodes_; }
  numeric::Rng& learner_rng() { return learner_rng_; }
  const PpoAgent& agent() const { return agent_; }
  PpoAgent& mutable_agent() { return agent_; }
  FemaHook* hook() { return hook_.get(); }
  const FemaHook* hook() const { return hook_.get(); }

  /// Actions of the most recent rollout, worker-major (inertness checks).
  const envs::VecRunResult& last_rollout() const { return last_; }

 private:
  PpoBatch build_batch(const envs::VecRunResult& run) const;

  std::vector<envs::RolloutWorker> workers_;
  PpoAgent agent_;
  std::unique_ptr<FemaHook> hook_;
  numeric::Rng learner_rng_;
  std::uint64_t steps_ = 0;
  std::uint64_t episodes_ = 0;
  envs::VecRunResult last_;
};

}  // namespace fema::agents
