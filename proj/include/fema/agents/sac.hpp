#pragma once

#include "fema/agents/episode.hpp"
#include "fema/agents/fema_hook.hpp"
#include "fema/agents/policies.hpp"
#include "fema/agents/replay_buffer.hpp"
#include "fema/envs/env.hpp"
#include "fema/numeric/adam.hpp"
#include "fema/numeric/binary_io.hpp"

#include <memory>
#include <optional>

namespace fema::agents {

struct SacConfig {
  double gamma = 0.99;
  double tau = 0.005;
  double lr_actor = 3e-4;
  double lr_critic = 3e-4;
  double lr_alpha = 3e-4;
  double init_alpha = 0.2;
  int hidden_width = 64;
  int batch_size = 128;
  std::size_t buffer_capacity = 100000;
  std::size_t learning_starts = 1000;
  int updates_per_step = 1;
  int log_every = 1000;  // environment steps between loss records

  void validate() const;
};

struct SacLosses {
  double critic1 = 0.0;
  double critic2 = 0.0;
  double actor = 0.0;
  double alpha_loss = 0.0;
  double alpha = 0.0;
  double mean_log_prob = 0.0;
};

/// Every learned quantity of SAC-lite. Critics take [s; a] with `a` in
/// environment units.
struct SacNets {
  numeric::Mlp actor;  // s -> [mean; log_std]
  numeric::Mlp q1, q2;
  numeric::Mlp q1_target, q2_target;
  double log_alpha = 0.0;

  static SacNets init(int state_dim, int action_dim, int hidden, double init_alpha, std::uint64_t seed);
  friend bool operator==(const SacNets&, const SacNets&) = default;
};

/// Reparameterized squashed sample for a batch: u = mean + std * noise.
struct SquashedSample {
  Matrix mean, log_std, std, u, t, action;
  Vector log_prob;
};
SquashedSample squashed_sample(const numeric::Mlp& actor, const Matrix& states, const Matrix& noise,
                               const ActionScale& scale, numeric::ForwardCache* cache = nullptr);

/// Soft Bellman targets r + gamma * (1 - terminal) * (min Q_target(s', a') - alpha * log pi(a'|s')),
/// with a' drawn through `next_noise`.
Vector sac_critic_targets(const SacNets& nets, const ReplayBatch& batch, const Matrix& next_noise,
                          const ActionScale& scale, double gamma);

/// mean_i (Q(s_i, a_i) - y_i)^2
double sac_critic_loss(const numeric::Mlp& q, const Matrix& states, const Matrix& actions, const Vector& targets,
                       numeric::MlpGrads* grads);

/// mean_i (alpha * log pi(a_i|s_i) - min(Q1, Q2)(s_i, a_i)), reparameterized through `noise`.
double sac_actor_loss(const numeric::Mlp& actor, const numeric::Mlp& q1, const numeric::Mlp& q2, double alpha,
                      const ActionScale& scale, const Matrix& states, const Matrix& noise, numeric::MlpGrads* grads,
                      double* mean_log_prob = nullptr);

/// -log_alpha * (mean_log_prob + target_entropy); `grad` receives d/dlog_alpha.
double sac_alpha_loss(double log_alpha, double mean_log_prob, double target_entropy, double* grad);

class SacAgent {
 public:
  SacAgent(const envs::EnvSpec& spec, const SacConfig& cfg, std::uint64_t seed);

  const SacConfig& config() const { return cfg_; }
  const envs::EnvSpec& env_spec() const { return spec_; }
  const SacNets& nets() const { return nets_; }
  SacNets& mutable_nets() { return nets_; }
  const ActionScale& scale() const { return scale_; }
  double target_entropy() const { return -static_cast<double>(spec_.action_dim); }

  SquashedGaussianPolicy policy() const { return SquashedGaussianPolicy(nets_.actor, scale_); }

  /// Training-mode action. Routes through FEMA when `hook` is enabled; otherwise
  /// one plain squashed draw from `rng`.
  selection::Selection act(const Vector& s, numeric::Rng& rng, const FemaHook* hook) const;

  /// Deterministic evaluation action.
  Vector act_eval(const Vector& s) const;

  /// One critic, actor and temperature step followed by the target update.
  SacLosses update(const ReplayBatch& batch, numeric::Rng& rng);

  void write(numeric::BinaryWriter& w) const;
  void read(numeric::BinaryReader& r);

 private:
  envs::EnvSpec spec_;
  SacConfig cfg_;
  ActionScale scale_;
  SacNets nets_;
  numeric::AdamState adam_actor_, adam_q1_, adam_q2_;
  numeric::VectorAdam adam_alpha_;
};

/// Single-threaded SAC-lite training loop with the FEMA capture/update hooks.
class SacTrainer {
 public:
  SacTrainer(std::unique_ptr<envs::Env> env, const SacConfig& cfg, std::unique_ptr<FemaHook> hook,
             std::uint64_t seed);

  /// Runs one episode, learning online. Hazard endings are captured and
  /// staged; the memory is updated as soon as M events are pending. When the
  /// trainer's step count reaches `step_cap` (0 = none) the episode is cut
  /// short with end tag none.
  EpisodeSummary run_episode(const LossSink& on_loss = {}, std::uint64_t step_cap = 0);

  /// Runs episodes until exactly `total_steps` environment steps were taken.
  void train(std::uint64_t total_steps, const EpisodeSink& on_episode, const LossSink& on_loss = {});

  std::uint64_t steps() const { return steps_; }
  std::uint64_t episodes() const { return episodes_; }
  const SacAgent& agent() const { return agent_; }
  SacAgent& mutable_agent() { return agent_; }
  FemaHook* hook() { return hook_.get(); }
  const FemaHook* hook() const { return hook_.get(); }
  const envs::Env& env() const { return *env_; }

  numeric::Rng& action_rng() { return action_rng_; }
  numeric::Rng& learner_rng() { return learner_rng_; }

 private:
  std::unique_ptr<envs::Env> env_;
  SacAgent agent_;
  std::unique_ptr<FemaHook> hook_;
  ReplayBuffer replay_;
  numeric::Rng action_rng_;
  numeric::Rng learner_rng_;
  std::uint64_t steps_ = 0;
  std::uint64_t episodes_ = 0;
  std::size_t updates_ = 0;
  LossSummary pending_loss_;
};

}  // namespace fema::agents
