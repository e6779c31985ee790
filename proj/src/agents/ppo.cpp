#include "fema/agents/ppo.hpp"

#include "fema/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace fema::agents {

namespace {

const double kHalfLog2PiE = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
constexpr std::array<char, 4> kPpoMagic{'F', 'P', 'P', 'O'};

bool inside_clamp(double raw) { return raw >= kLogStdMin && raw <= kLogStdMax; }

}  // namespace

void PpoConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("ppo.gamma must be in (0, 1]");
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) throw ConfigError("ppo.gae_lambda must be in [0, 1]");
  if (!(clip_ratio > 0.0 && clip_ratio < 1.0)) throw ConfigError("ppo.clip_ratio must be in (0, 1)");
  if (!(lr >= 0.0)) throw ConfigError("ppo.lr must be non-negative");
  if (epochs < 1 || minibatch_size < 1 || rollout_steps < 1 || workers < 1 || hidden_width < 1)
    throw ConfigError("ppo sizes must be >= 1");
  if (!(vf_coef >= 0.0) || !(ent_coef >= 0.0)) throw ConfigError("ppo loss coefficients must be >= 0");
  if (!(target_kl > 0.0)) throw ConfigError("ppo.target_kl must be positive");
}

PpoNets PpoNets::init(int state_dim, int action_dim, int hidden, double init_log_std, std::uint64_t seed) {
  PpoNets n;
  n.mean_net = numeric::Mlp::init(numeric::MlpSpec::two_hidden(state_dim, action_dim, hidden),
                                  numeric::Rng::derive(seed, 1).next_u64());
  n.value = numeric::Mlp::init(numeric::MlpSpec::two_hidden(state_dim, 1, hidden), numeric::Rng::derive(seed, 2).next_u64());
  n.log_std = Vector::Constant(action_dim, init_log_std);
  return n;
}

PpoBatch PpoBatch::subset(const std::vector<Eigen::Index>& idx) const {
  PpoBatch b;
  const auto n = static_cast<Eigen::Index>(idx.size());
  b.states.resize(states.rows(), n);
  b.actions.resize(actions.rows(), n);
  b.log_prob_old.resize(n);
  b.advantages.resize(n);
  b.returns.resize(n);
  b.fema_selected.resize(idx.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index k = idx[static_cast<std::size_t>(i)];
    b.states.col(i) = states.col(k);
    b.actions.col(i) = actions.col(k);
    b.log_prob_old[i] = log_prob_old[k];
    b.advantages[i] = advantages[k];
    b.returns[i] = returns[k];
    b.fema_selected[static_cast<std::size_t>(i)] = fema_selected[static_cast<std::size_t>(k)];
  }
  return b;
}

PpoLossParts ppo_loss(const PpoNets& nets, const PpoBatch& batch, const PpoLossSettings& st, PpoGrads* grads) {
  const Eigen::Index n = batch.size();
  const Eigen::Index d = nets.log_std.size();
  if (n == 0) throw UsageError("ppo_loss: empty batch");
  numeric::require_shape(batch.actions, d, n, "ppo_loss actions");

  numeric::ForwardCache mean_cache, value_cache;
  const Matrix mean = nets.mean_net.forward(batch.states, mean_cache);
  const Matrix values = nets.value.forward(batch.states, value_cache);
  Vector log_std(d);
  for (Eigen::Index k = 0; k < d; ++k) log_std[k] = clamp_log_std(nets.log_std[k]);
  const Vector inv_var = (-2.0 * log_std).array().exp();

  Eigen::Index included = 0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(st.mask_fema && batch.fema_selected[static_cast<std::size_t>(i)])) ++included;

  PpoLossParts parts;
  Vector d_logp = Vector::Zero(n);
  const double lo = 1.0 - st.clip_ratio, hi = 1.0 + st.clip_ratio;
  Eigen::Index clipped = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double logp = diag_gaussian_log_prob(mean.col(i), log_std, batch.actions.col(i));
    parts.approx_kl += batch.log_prob_old[i] - logp;
    if (st.mask_fema && batch.fema_selected[static_cast<std::size_t>(i)]) continue;
    const double ratio = std::exp(logp - batch.log_prob_old[i]);
    const double a = batch.advantages[i];
    const double s1 = ratio * a;
    const double s2 = std::clamp(ratio, lo, hi) * a;
    const bool inside = ratio >= lo && ratio <= hi;
    if (!inside) ++clipped;
    parts.policy -= std::min(s1, s2);
    if (s1 <= s2 || inside) d_logp[i] = -ratio * a / static_cast<double>(included);
  }
  if (included > 0) parts.policy /= static_cast<double>(included);
  parts.approx_kl /= static_cast<double>(n);
  parts.clip_fraction = included > 0 ? static_cast<double>(clipped) / static_cast<double>(included) : 0.0;

  const Vector v_diff = values.row(0).transpose() - batch.returns;
  parts.value = v_diff.squaredNorm() / static_cast<double>(n);
  parts.entropy = log_std.sum() + static_cast<double>(d) * kHalfLog2PiE;
  parts.total = parts.policy + st.vf_coef * parts.value - st.ent_coef * parts.entropy;

  if (grads) {
    Matrix mean_grad(d, n);
    Vector ls_grad = Vector::Zero(d);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index k = 0; k < d; ++k) {
        const double diff = batch.actions(k, i) - mean(k, i);
        mean_grad(k, i) = d_logp[i] * diff * inv_var[k];
        ls_grad[k] += d_logp[i] * (diff * diff * inv_var[k] - 1.0);
      }
    }
    for (Eigen::Index k = 0; k < d; ++k) {
      ls_grad[k] -= st.ent_coef;
      if (!inside_clamp(nets.log_std[k])) ls_grad[k] = 0.0;
    }
    grads->mean = nets.mean_net.backward(mean_cache, mean_grad);
    const Matrix vg = (2.0 * st.vf_coef / static_cast<double>(n)) * v_diff.transpose();
    grads->value = nets.value.backward(value_cache, vg);
    grads->log_std = ls_grad;
  }
  return parts;
}

Vector gae(const Vector& rewards, const Vector& values, const Vector& next_values, const std::vector<bool>& terminal,
           const std::vector<bool>& episode_end, double gamma, double lambda) {
  const Eigen::Index n = rewards.size();
  if (values.size() != n || next_values.size() != n || static_cast<Eigen::Index>(terminal.size()) != n ||
      static_cast<Eigen::Index>(episode_end.size()) != n)
    throw ShapeError("gae: input lengths differ");
  Vector adv(n);
  double next_adv = 0.0;
  for (Eigen::Index t = n - 1; t >= 0; --t) {
    const auto ut = static_cast<std::size_t>(t);
    const double bootstrap = terminal[ut] ? 0.0 : gamma * next_values[t];
    const double delta = rewards[t] + bootstrap - values[t];
    const double carry = episode_end[ut] ? 0.0 : gamma * lambda * next_adv;
    adv[t] = delta + carry;
    next_adv = adv[t];
  }
  return adv;
}

Vector normalize_advantages(const Vector& adv) {
  if (adv.size() == 0) return adv;
  const double mu = adv.mean();
  const double sd = std::sqrt((adv.array() - mu).square().mean());
  return (adv.array() - mu) / (sd + 1e-8);
}

// ---------------------------------------------------------------------------

PpoAgent::PpoAgent(const envs::EnvSpec& spec, const PpoConfig& cfg, std::uint64_t seed)
    : spec_(spec),
      cfg_(cfg),
      nets_(PpoNets::init(spec.state_dim, spec.action_dim, cfg.hidden_width, cfg.init_log_std, seed)) {
  spec_.validate();
  cfg_.validate();
  adam_mean_ = numeric::AdamState::for_mlp(nets_.mean_net, {.lr = cfg_.lr});
  adam_value_ = numeric::AdamState::for_mlp(nets_.value, {.lr = cfg_.lr});
  adam_log_std_ = numeric::VectorAdam(spec.action_dim, {.lr = cfg_.lr});
}

envs::ActOutcome PpoAgent::act(const Vector& s, numeric::Rng& rng, const FemaHook* hook) const {
  const DiagGaussianPolicy pi = policy();
  envs::ActOutcome out;
  if (hook && hook->enabled()) {
    const selection::Selection sel = hook->select(s, pi, rng);
    out.raw = sel.raw;
    out.fallback = sel.trace.fallback;
  } else {
    out.raw = selection::sample_candidates(pi, s, 1, rng).raw.col(0);
    out.fallback = true;
  }
  out.env_action = pi.to_env(out.raw);
  out.log_prob = pi.log_prob(s, out.raw);
  out.value = value(s);
  return out;
}

Vector PpoAgent::act_eval(const Vector& s) const { return policy().mean_action(s); }

double PpoAgent::value(const Vector& s) const { return nets_.value.apply(s)[0]; }

LossSummary PpoAgent::update(const PpoBatch& batch, numeric::Rng& rng) {
  const PpoLossSettings st{cfg_.clip_ratio, cfg_.vf_coef, cfg_.ent_coef, cfg_.importance_correction};
  const auto n = static_cast<std::size_t>(batch.size());
  std::vector<Eigen::Index> order(n);
  LossSummary out;
  double kl = 0.0;
  int epochs_run = 0;
  for (int e = 0; e < cfg_.epochs; ++e) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    const auto mb = static_cast<std::size_t>(cfg_.minibatch_size);
    for (std::size_t start = 0; start < n;) {
      std::size_t end = std::min(n, start + mb);
      if (n - end == 1) end = n;  // avoid a trailing single-sample batch
      const PpoBatch sub = batch.subset(std::vector<Eigen::Index>(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                                  order.begin() + static_cast<std::ptrdiff_t>(end)));
      PpoGrads g;
      const PpoLossParts p = ppo_loss(nets_, sub, st, &g);
      if (!std::isfinite(p.total)) throw TrainingError("PPO-lite: non-finite loss");
      numeric::adam_step(nets_.mean_net, g.mean, adam_mean_);
      numeric::adam_step(nets_.value, g.value, adam_value_);
      adam_log_std_.apply(nets_.log_std, g.log_std);
      ++out.updates;
      out.values["policy"] += p.policy;
      out.values["value"] += p.value;
      out.values["entropy"] += p.entropy;
      out.values["clip_fraction"] += p.clip_fraction;
      start = end;
    }
    ++epochs_run;
    kl = ppo_loss(nets_, batch, st, nullptr).approx_kl;
    if (kl > 1.5 * cfg_.target_kl) break;
  }
  for (auto& [k, v] : out.values) v /= static_cast<double>(std::max<std::size_t>(out.updates, 1));
  out.values["approx_kl"] = kl;
  out.values["epochs"] = epochs_run;
  out.values["log_std"] = nets_.log_std.mean();
  return out;
}

void PpoAgent::write(numeric::BinaryWriter& w) const {
  w.magic(kPpoMagic);
  w.u32(1);
  numeric::write_mlp(w, nets_.mean_net);
  numeric::write_mlp(w, nets_.value);
  w.vector(nets_.log_std);
}

void PpoAgent::read(numeric::BinaryReader& r) {
  r.expect_magic(kPpoMagic, "PPO-lite checkpoint");
  if (r.u32() != 1) throw FormatError("PPO-lite checkpoint: unsupported version");
  PpoNets n;
  n.mean_net = numeric::read_mlp(r);
  n.value = numeric::read_mlp(r);
  n.log_std = r.vector();
  if (n.mean_net.input_width() != spec_.state_dim || n.mean_net.output_width() != spec_.action_dim ||
      n.value.input_width() != spec_.state_dim || n.log_std.size() != spec_.action_dim)
    throw FormatError("PPO-lite checkpoint: dimensions do not match the environment");
  nets_ = std::move(n);
  adam_mean_ = numeric::AdamState::for_mlp(nets_.mean_net, {.lr = cfg_.lr});
  adam_value_ = numeric::AdamState::for_mlp(nets_.value, {.lr = cfg_.lr});
}

// ---------------------------------------------------------------------------

PpoTrainer::PpoTrainer(std::vector<std::unique_ptr<envs::Env>> envs, const PpoConfig& cfg,
                       std::unique_ptr<FemaHook> hook, std::uint64_t seed)
    : agent_((envs.empty() ? throw ConfigError("PpoTrainer: no environments") : envs.front()->spec()), cfg, seed),
      hook_(std::move(hook)),
      learner_rng_(numeric::Rng::derive(seed, 12)) {
  workers_.reserve(envs.size());
  for (std::size_t w = 0; w < envs.size(); ++w)
    workers_.emplace_back(std::move(envs[w]), numeric::Rng::derive(seed, 1000 + w).next_u64());
}

PpoBatch PpoTrainer::build_batch(const envs::VecRunResult& run) const {
  const auto& spec = agent_.env_spec();
  PpoBatch b;
  const auto n = static_cast<Eigen::Index>(run.total_steps);
  b.states.resize(spec.state_dim, n);
  b.actions.resize(spec.action_dim, n);
  b.log_prob_old.resize(n);
  b.advantages.resize(n);
  b.returns.resize(n);
  b.fema_selected.resize(static_cast<std::size_t>(n));
  Eigen::Index col = 0;
  for (const auto& steps : run.steps) {
    const auto m = static_cast<Eigen::Index>(steps.size());
    if (m == 0) continue;
    Matrix next(spec.state_dim, m);
    Vector rewards(m), values(m);
    std::vector<bool> terminal(steps.size()), ended(steps.size());
    for (Eigen::Index t = 0; t < m; ++t) {
      const auto& rec = steps[static_cast<std::size_t>(t)];
      next.col(t) = rec.transition.s_next;
      rewards[t] = rec.transition.r;
      values[t] = rec.outcome.value;
      terminal[static_cast<std::size_t>(t)] = rec.transition.end == EndTag::hazard;
      ended[static_cast<std::size_t>(t)] = rec.transition.end != EndTag::none;
      b.states.col(col + t) = rec.transition.s;
      b.actions.col(col + t) = rec.outcome.raw;
      b.log_prob_old[col + t] = rec.outcome.log_prob;
      b.fema_selected[static_cast<std::size_t>(col + t)] = !rec.outcome.fallback;
    }
    const Vector next_values = agent_.nets().value.forward(next).row(0).transpose();
    const Vector adv = gae(rewards, values, next_values, terminal, ended, agent_.config().gamma,
                           agent_.config().gae_lambda);
    b.advantages.segment(col, m) = adv;
    b.returns.segment(col, m) = adv + values;
    col += m;
  }
  b.advantages = normalize_advantages(b.advantages);
  return b;
}

std::vector<EpisodeSummary> PpoTrainer::iterate(std::size_t steps, const LossSink& on_loss) {
  const FemaHook* active_hook = hook_ && hook_->enabled() ? hook_.get() : nullptr;
  const PpoAgent& agent = agent_;
  const envs::ActFn act = [&agent, active_hook](std::size_t, const Vector& s, numeric::Rng& rng) {
    return agent.act(s, rng, active_hook);
  };
  last_ = envs::vec_run(workers_, act, steps, agent_.config().parallel);
  steps_ += last_.total_steps;

  LossSummary loss = agent_.update(build_batch(last_), learner_rng_);
  loss.step = steps_;
  if (on_loss) on_loss(loss);

  std::vector<EpisodeSummary> out;
  out.reserve(last_.episodes.size());
  for (const auto& ep : last_.episodes) {
    EpisodeSummary s;
    s.id = episodes_++;
    s.step = steps_;
    s.total_return = ep.total_return;
    s.length = ep.length;
    s.end = ep.end;
    s.fallback_rate = ep.fallback_rate;
    if (hook_ && hook_->enabled()) s.staged = hook_->on_episode_end(ep.transitions, s.id, steps_);
    out.push_back(s);
  }
  if (hook_ && hook_->enabled()) {
    hook_->update_if_due();
    for (auto& s : out) {
      s.memory_records = hook_->published_records();
      s.memory_updates = hook_->updates();
    }
  }
  return out;
}

std::vector<EpisodeSummary> PpoTrainer::finish() {
  std::vector<EpisodeSummary> out;
  for (auto& w : workers_) {
    if (w.needs_reset || w.episode.empty()) continue;
    EpisodeSummary s;
    s.id = episodes_++;
    s.step = steps_;
    s.total_return = w.episode_return;
    s.length = static_cast<int>(w.episode.size());
    s.end = EndTag::none;
    s.fallback_rate = static_cast<double>(w.episode_fallbacks) / static_cast<double>(s.length);
    w.needs_reset = true;
    if (hook_ && hook_->enabled()) {
      s.memory_records = hook_->published_records();
      s.memory_updates = hook_->updates();
    }
    out.push_back(s);
  }
  return out;
}

void PpoTrainer::train(std::uint64_t total_steps, const EpisodeSink& on_episode, const LossSink& on_loss) {
  const auto rollout = static_cast<std::uint64_t>(agent_.config().rollout_steps);
  while (steps_ < total_steps) {
    const auto n = static_cast<std::size_t>(std::min(rollout, total_steps - steps_));
    for (const auto& s : iterate(n, on_loss))
      if (on_episode) on_episode(s);
  }
  for (const auto& s : finish())
    if (on_episode) on_episode(s);
}

}  // namespace fema::agents
