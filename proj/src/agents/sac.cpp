#include "fema/agents/sac.hpp"

#include "fema/error.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace fema::agents {

namespace {

constexpr double kSquashEps = 1e-6;
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
constexpr std::array<char, 4> kSacMagic{'F', 'S', 'A', 'C'};

Matrix draw_normals(Eigen::Index rows, Eigen::Index cols, numeric::Rng& rng) {
  Matrix m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = rng.normal();
  return m;
}

Matrix stack_rows(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top, bottom;
  return out;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw TrainingError(std::string("SAC-lite: non-finite ") + what);
}

}  // namespace

void SacConfig::validate() const {
  if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("sac.gamma must be in (0, 1]");
  if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("sac.tau must be in (0, 1]");
  // zero is allowed: it freezes the networks
  if (!(lr_actor >= 0.0) || !(lr_critic >= 0.0) || !(lr_alpha >= 0.0)) throw ConfigError("sac learning rates must be non-negative");
  if (!(init_alpha > 0.0)) throw ConfigError("sac.init_alpha must be positive");
  if (hidden_width < 1 || batch_size < 1 || updates_per_step < 1 || log_every < 1)
    throw ConfigError("sac sizes must be >= 1");
  if (buffer_capacity < static_cast<std::size_t>(batch_size)) throw ConfigError("sac.buffer_capacity < batch_size");
}

SacNets SacNets::init(int state_dim, int action_dim, int hidden, double init_alpha, std::uint64_t seed) {
  using numeric::Mlp;
  using numeric::MlpSpec;
  SacNets n;
  n.actor = Mlp::init(MlpSpec::two_hidden(state_dim, 2 * action_dim, hidden), numeric::Rng::derive(seed, 1).next_u64());
  const auto q_spec = MlpSpec::two_hidden(state_dim + action_dim, 1, hidden);
  n.q1 = Mlp::init(q_spec, numeric::Rng::derive(seed, 2).next_u64());
  n.q2 = Mlp::init(q_spec, numeric::Rng::derive(seed, 3).next_u64());
  n.q1_target = n.q1;
  n.q2_target = n.q2;
  n.log_alpha = std::log(init_alpha);
  return n;
}

SquashedSample squashed_sample(const numeric::Mlp& actor, const Matrix& states, const Matrix& noise,
                               const ActionScale& scale, numeric::ForwardCache* cache) {
  const Eigen::Index d = scale.half.size();
  const Matrix out = cache ? actor.forward(states, *cache) : actor.forward(states);
  if (out.rows() != 2 * d) throw ShapeError("squashed_sample: actor output width mismatch");
  numeric::require_shape(noise, d, states.cols(), "squashed_sample noise");
  SquashedSample s;
  SquashedGaussianPolicy::split_output(out, d, s.mean, s.log_std);
  s.std = s.log_std.array().exp();
  s.u = s.mean + s.std.cwiseProduct(noise);
  s.t = s.u.array().tanh();
  s.action = (s.t.array().colwise() * scale.half.array()).colwise() + scale.center.array();
  s.log_prob.resize(states.cols());
  const double log_half = scale.half.array().log().sum();
  for (Eigen::Index i = 0; i < states.cols(); ++i) {
    double lp = -log_half;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double t = s.t(k, i);
      lp += -0.5 * noise(k, i) * noise(k, i) - s.log_std(k, i) - kHalfLog2Pi - std::log(1.0 - t * t + kSquashEps);
    }
    s.log_prob[i] = lp;
  }
  return s;
}

Vector sac_critic_targets(const SacNets& nets, const ReplayBatch& batch, const Matrix& next_noise,
                          const ActionScale& scale, double gamma) {
  const SquashedSample next = squashed_sample(nets.actor, batch.next_states, next_noise, scale);
  const Matrix in = stack_rows(batch.next_states, next.action);
  const Vector q1 = nets.q1_target.forward(in).row(0).transpose();
  const Vector q2 = nets.q2_target.forward(in).row(0).transpose();
  const double alpha = std::exp(nets.log_alpha);
  const Vector soft = q1.cwiseMin(q2) - alpha * next.log_prob;
  return batch.rewards + gamma * (Vector::Ones(batch.rewards.size()) - batch.terminal).cwiseProduct(soft);
}

double sac_critic_loss(const numeric::Mlp& q, const Matrix& states, const Matrix& actions, const Vector& targets,
                       numeric::MlpGrads* grads) {
  const Eigen::Index n = states.cols();
  numeric::require_width(targets, n, "sac_critic_loss targets");
  numeric::ForwardCache cache;
  const Matrix out = q.forward(stack_rows(states, actions), cache);
  const Vector diff = out.row(0).transpose() - targets;
  const double loss = diff.squaredNorm() / static_cast<double>(n);
  if (grads) {
    const Matrix g = (2.0 / static_cast<double>(n)) * diff.transpose();
    *grads = q.backward(cache, g);
  }
  return loss;
}

double sac_actor_loss(const numeric::Mlp& actor, const numeric::Mlp& q1, const numeric::Mlp& q2, double alpha,
                      const ActionScale& scale, const Matrix& states, const Matrix& noise, numeric::MlpGrads* grads,
                      double* mean_log_prob) {
  const Eigen::Index n = states.cols();
  const Eigen::Index d = scale.half.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  numeric::ForwardCache actor_cache;
  const SquashedSample smp = squashed_sample(actor, states, noise, scale, &actor_cache);
  const Matrix in = stack_rows(states, smp.action);
  numeric::ForwardCache c1, c2;
  const Matrix o1 = q1.forward(in, c1);
  const Matrix o2 = q2.forward(in, c2);

  double loss = 0.0;
  Matrix g1 = Matrix::Zero(1, n), g2 = Matrix::Zero(1, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const bool first = o1(0, i) <= o2(0, i);
    loss += alpha * smp.log_prob[i] - (first ? o1(0, i) : o2(0, i));
    (first ? g1 : g2)(0, i) = -inv_n;
  }
  loss *= inv_n;
  if (mean_log_prob) *mean_log_prob = smp.log_prob.mean();
  if (!grads) return loss;

  Matrix in_grad1, in_grad2;
  q1.backward(c1, g1, &in_grad1);
  q2.backward(c2, g2, &in_grad2);
  const Matrix d_action = (in_grad1 + in_grad2).bottomRows(d);

  // Raw actor outputs, to zero the log-std gradient where the clamp is active.
  const Matrix& raw = actor_cache.outputs.back();
  Matrix out_grad(2 * d, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) {
      const double t = smp.t(k, i);
      const double sech2 = 1.0 - t * t;
      const double d_u = d_action(k, i) * scale.half[k] * sech2 + alpha * inv_n * 2.0 * t * sech2 / (sech2 + kSquashEps);
      out_grad(k, i) = d_u;
      const double r = raw(d + k, i);
      const bool active = r >= kLogStdMin && r <= kLogStdMax;
      out_grad(d + k, i) = active ? d_u * smp.std(k, i) * noise(k, i) - alpha * inv_n : 0.0;
    }
  }
  *grads = actor.backward(actor_cache, out_grad);
  return loss;
}

double sac_alpha_loss(double log_alpha, double mean_log_prob, double target_entropy, double* grad) {
  const double c = mean_log_prob + target_entropy;
  if (grad) *grad = -c;
  return -log_alpha * c;
}

// ---------------------------------------------------------------------------

SacAgent::SacAgent(const envs::EnvSpec& spec, const SacConfig& cfg, std::uint64_t seed)
    : spec_(spec),
      cfg_(cfg),
      scale_(ActionScale::from_bounds(spec.action_low, spec.action_high)),
      nets_(SacNets::init(spec.state_dim, spec.action_dim, cfg.hidden_width, cfg.init_alpha, seed)) {
  spec_.validate();
  cfg_.validate();
  adam_actor_ = numeric::AdamState::for_mlp(nets_.actor, {.lr = cfg_.lr_actor});
  adam_q1_ = numeric::AdamState::for_mlp(nets_.q1, {.lr = cfg_.lr_critic});
  adam_q2_ = numeric::AdamState::for_mlp(nets_.q2, {.lr = cfg_.lr_critic});
  adam_alpha_ = numeric::VectorAdam(1, {.lr = cfg_.lr_alpha});
}

selection::Selection SacAgent::act(const Vector& s, numeric::Rng& rng, const FemaHook* hook) const {
  const SquashedGaussianPolicy pi = policy();
  if (hook && hook->enabled()) {
    selection::Selection sel = hook->select(s, pi, rng);
    sel.trace.log_prob = pi.log_prob(s, sel.raw);
    return sel;
  }
  const selection::Candidates c = selection::sample_candidates(pi, s, 1, rng);
  selection::Selection sel;
  sel.raw = c.raw.col(0);
  sel.action = c.actions.col(0);
  sel.trace.state = s;
  return sel;
}

Vector SacAgent::act_eval(const Vector& s) const { return policy().mean_action(s); }

SacLosses SacAgent::update(const ReplayBatch& batch, numeric::Rng& rng) {
  const Eigen::Index n = batch.states.cols();
  const Eigen::Index d = spec_.action_dim;
  SacLosses out;

  const Matrix next_noise = draw_normals(d, n, rng);
  const Vector y = sac_critic_targets(nets_, batch, next_noise, scale_, cfg_.gamma);
  numeric::MlpGrads g1, g2;
  out.critic1 = sac_critic_loss(nets_.q1, batch.states, batch.actions, y, &g1);
  out.critic2 = sac_critic_loss(nets_.q2, batch.states, batch.actions, y, &g2);
  check_finite(out.critic1, "critic loss");
  check_finite(out.critic2, "critic loss");
  numeric::adam_step(nets_.q1, g1, adam_q1_);
  numeric::adam_step(nets_.q2, g2, adam_q2_);

  const Matrix noise = draw_normals(d, n, rng);
  const double alpha = std::exp(nets_.log_alpha);
  numeric::MlpGrads ga;
  out.actor = sac_actor_loss(nets_.actor, nets_.q1, nets_.q2, alpha, scale_, batch.states, noise, &ga,
                             &out.mean_log_prob);
  check_finite(out.actor, "actor loss");
  numeric::adam_step(nets_.actor, ga, adam_actor_);

  double grad_alpha = 0.0;
  out.alpha_loss = sac_alpha_loss(nets_.log_alpha, out.mean_log_prob, target_entropy(), &grad_alpha);
  check_finite(out.alpha_loss, "temperature loss");
  Vector la(1), gl(1);
  la[0] = nets_.log_alpha;
  gl[0] = grad_alpha;
  adam_alpha_.apply(la, gl);
  nets_.log_alpha = la[0];
  out.alpha = std::exp(nets_.log_alpha);

  nets_.q1_target.soft_update(nets_.q1, cfg_.tau);
  nets_.q2_target.soft_update(nets_.q2, cfg_.tau);
  return out;
}

void SacAgent::write(numeric::BinaryWriter& w) const {
  w.magic(kSacMagic);
  w.u32(1);
  numeric::write_mlp(w, nets_.actor);
  numeric::write_mlp(w, nets_.q1);
  numeric::write_mlp(w, nets_.q2);
  numeric::write_mlp(w, nets_.q1_target);
  numeric::write_mlp(w, nets_.q2_target);
  w.f64(nets_.log_alpha);
}

void SacAgent::read(numeric::BinaryReader& r) {
  r.expect_magic(kSacMagic, "SAC-lite checkpoint");
  if (r.u32() != 1) throw FormatError("SAC-lite checkpoint: unsupported version");
  SacNets n;
  n.actor = numeric::read_mlp(r);
  n.q1 = numeric::read_mlp(r);
  n.q2 = numeric::read_mlp(r);
  n.q1_target = numeric::read_mlp(r);
  n.q2_target = numeric::read_mlp(r);
  n.log_alpha = r.f64();
  if (n.actor.input_width() != spec_.state_dim || n.actor.output_width() != 2 * spec_.action_dim ||
      n.q1.input_width() != spec_.state_dim + spec_.action_dim)
    throw FormatError("SAC-lite checkpoint: dimensions do not match the environment");
  nets_ = std::move(n);
  adam_actor_ = numeric::AdamState::for_mlp(nets_.actor, {.lr = cfg_.lr_actor});
  adam_q1_ = numeric::AdamState::for_mlp(nets_.q1, {.lr = cfg_.lr_critic});
  adam_q2_ = numeric::AdamState::for_mlp(nets_.q2, {.lr = cfg_.lr_critic});
}

// ---------------------------------------------------------------------------

SacTrainer::SacTrainer(std::unique_ptr<envs::Env> env, const SacConfig& cfg, std::unique_ptr<FemaHook> hook,
                       std::uint64_t seed)
    : env_(std::move(env)),
      agent_(env_->spec(), cfg, seed),
      hook_(std::move(hook)),
      replay_(env_->spec().state_dim, env_->spec().action_dim, cfg.buffer_capacity),
      action_rng_(numeric::Rng::derive(seed, 11)),
      learner_rng_(numeric::Rng::derive(seed, 12)) {}

EpisodeSummary SacTrainer::run_episode(const LossSink& on_loss, std::uint64_t step_cap) {
  const SacConfig& cfg = agent_.config();
  const FemaHook* active_hook = hook_ && hook_->enabled() ? hook_.get() : nullptr;
  std::vector<Transition> episode;
  Vector s = env_->reset();
  std::uint64_t fallbacks = 0;
  for (;;) {
    selection::Selection sel = agent_.act(s, action_rng_, active_hook);
    if (sel.trace.fallback) ++fallbacks;
    envs::StepResult r = env_->step(sel.action);
    if (!std::isfinite(r.reward) || !r.next_state.allFinite()) throw RunError("environment produced non-finite values");
    episode.push_back(Transition{s, sel.action, r.reward, r.next_state, r.end});
    replay_.add(episode.back());
    ++steps_;

    if (replay_.size() >= cfg.learning_starts && replay_.size() >= static_cast<std::size_t>(cfg.batch_size)) {
      for (int u = 0; u < cfg.updates_per_step; ++u) {
        const SacLosses l = agent_.update(replay_.sample(static_cast<std::size_t>(cfg.batch_size), learner_rng_),
                                          learner_rng_);
        ++updates_;
        ++pending_loss_.updates;
        pending_loss_.values["critic1"] += l.critic1;
        pending_loss_.values["critic2"] += l.critic2;
        pending_loss_.values["actor"] += l.actor;
        pending_loss_.values["alpha_loss"] += l.alpha_loss;
        pending_loss_.values["alpha"] += l.alpha;
        pending_loss_.values["log_prob"] += l.mean_log_prob;
      }
    }
    if (steps_ % static_cast<std::uint64_t>(cfg.log_every) == 0 && pending_loss_.updates > 0) {
      pending_loss_.step = steps_;
      for (auto& [k, v] : pending_loss_.values) v /= static_cast<double>(pending_loss_.updates);
      if (on_loss) on_loss(pending_loss_);
      pending_loss_ = LossSummary{};
    }

    s = r.next_state;
    if (r.end != EndTag::none || (step_cap > 0 && steps_ >= step_cap)) break;
  }

  EpisodeSummary sum;
  sum.id = episodes_++;
  sum.step = steps_;
  sum.length = static_cast<int>(episode.size());
  sum.end = episode.back().end;
  for (const auto& t : episode) sum.total_return += t.r;
  sum.fallback_rate = static_cast<double>(fallbacks) / static_cast<double>(sum.length);
  if (hook_ && hook_->enabled()) {
    sum.staged = hook_->on_episode_end(episode, sum.id, steps_);
    hook_->update_if_due();
    sum.memory_records = hook_->published_records();
    sum.memory_updates = hook_->updates();
  }
  return sum;
}

void SacTrainer::train(std::uint64_t total_steps, const EpisodeSink& on_episode, const LossSink& on_loss) {
  while (steps_ < total_steps) {
    const EpisodeSummary s = run_episode(on_loss, total_steps);
    if (on_episode) on_episode(s);
  }
}

}  // namespace fema::agents
