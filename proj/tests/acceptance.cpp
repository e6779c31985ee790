// Acceptance runner: one PASS/FAIL line per criterion 1-11.
//
//   fema_acceptance [--work DIR] [--only 1,5,8]
//
// Criteria 8, 9 and 11 train real runs under DIR (default: a temp dir) and
// dominate the runtime.
#include "helpers.hpp"

#include "fema/agents/fema_hook.hpp"
#include "fema/agents/ppo.hpp"
#include "fema/agents/sac.hpp"
#include "fema/embedding/embedding_stack.hpp"
#include "fema/envs/env.hpp"
#include "fema/error.hpp"
#include "fema/harness/config.hpp"
#include "fema/harness/report.hpp"
#include "fema/harness/runner.hpp"
#include "fema/memory/failure_memory.hpp"
#include "fema/selection/selection.hpp"

#include "CLI11.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace fema;
using numeric::Rng;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

fs::path source_dir() { return fs::path(FEMA_SOURCE_DIR); }

// ---------------------------------------------------------------- 1
Outcome monte_carlo_returns_oracle() {
  Rng rng(101);
  const double gammas[] = {0.9, 0.99, 1.0};
  double worst_sum = 0.0, worst_bellman = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    memory::FemaConfig cfg;
    cfg.gamma = gammas[trial % 3];
    cfg.suffix_len = 1 + static_cast<int>(rng.below(50));
    const int T = 1 + static_cast<int>(rng.below(60));
    std::vector<Transition> ep;
    for (int t = 0; t < T; ++t)
      ep.push_back({Vector::Zero(2), Vector::Zero(1), rng.uniform(-3.0, 3.0), Vector::Zero(2),
                    t == T - 1 ? EndTag::hazard : EndTag::none});
    const auto ev = memory::capture_failure(ep, cfg, 0, 0);
    if (!ev) return {false, "hazard episode was not captured"};
    const int K = std::min(T, cfg.suffix_len);
    if (ev->returns.size() != K) return {false, "suffix length " + std::to_string(ev->returns.size())};
    for (int t = 0; t < K; ++t) {
      double direct = 0.0;
      for (int n = t; n < K; ++n) direct += std::pow(cfg.gamma, n - t) * ep[static_cast<std::size_t>(T - K + n)].r;
      worst_sum = std::max(worst_sum, std::abs(ev->returns[t] - direct));
      const double next = t + 1 < K ? ev->returns[t + 1] : 0.0;
      worst_bellman = std::max(worst_bellman, std::abs(ev->returns[t] - (ev->steps[static_cast<std::size_t>(t)].r + cfg.gamma * next)));
    }
  }
  return {worst_sum <= 1e-12 && worst_bellman <= 1e-12,
          "max |H - direct sum| = " + fmt("%.2e", worst_sum) + ", max Bellman residual = " + fmt("%.2e", worst_bellman)};
}

// ---------------------------------------------------------------- 2
Outcome normalization() {
  Rng rng(102);
  double worst_mean = 0.0, worst_std = 0.0;
  int batches = 0;
  while (batches < 1000) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng.below(200));
    const double scale = std::exp(rng.uniform(-5.0, 5.0));
    const Vector H = (test::random_vector(rng, n, scale).array() + rng.uniform(-100.0, 100.0)).matrix();
    const double sd = std::sqrt((H.array() - H.mean()).square().mean());
    if (sd <= 1e-3) continue;
    ++batches;
    const Vector y = embedding::normalize_returns(H);
    worst_mean = std::max(worst_mean, std::abs(y.mean()));
    worst_std = std::max(worst_std, std::abs(std::sqrt((y.array() - y.mean()).square().mean()) - 1.0));
  }
  bool constant_ok = true;
  for (int k = 0; k < 100; ++k) {
    const Vector c = Vector::Constant(1 + static_cast<Eigen::Index>(rng.below(50)), rng.uniform(-50.0, 50.0));
    constant_ok = constant_ok && embedding::normalize_returns(c).isZero(0.0);
  }
  return {worst_mean < 1e-9 && worst_std < 1e-5 && constant_ok,
          "max |mean| = " + fmt("%.2e", worst_mean) + ", max |std - 1| = " + fmt("%.2e", worst_std) +
              ", constant batches zero: " + (constant_ok ? "yes" : "no")};
}

// ---------------------------------------------------------------- 3
Outcome gradient_check() {
  double worst_risk = 0.0, worst_sac = 0.0, worst_ppo = 0.0;
  const auto spec = envs::env_spec("cliff_corridor");
  for (std::uint64_t p = 0; p < 20; ++p) {
    Rng rng(1000 + p);
    {
      embedding::EmbeddingConfig ec;
      ec.dims = {3, 2, 4, 3, 5};
      ec.hidden_width = 6;
      const embedding::EmbeddingStack stack(ec, p);
      const Matrix S = test::random_matrix(rng, 3, 6), A = test::random_matrix(rng, 2, 6);
      const Vector y = test::random_vector(rng, 6);
      embedding::StackGrads g;
      stack.loss(S, A, y, &g);
      const numeric::MlpGrads* parts[4] = {&g.f, &g.g, &g.j, &g.h};
      const numeric::Mlp* nets[4] = {&stack.f(), &stack.g(), &stack.j(), &stack.h()};
      for (std::size_t k = 0; k < 4; ++k) {
        auto loss = [&](const Vector& th) {
          embedding::EmbeddingStack c = stack;
          c.mutable_net(k).set_flat_parameters(th);
          return c.loss(S, A, y, nullptr);
        };
        worst_risk = std::max(worst_risk, test::max_rel_error(parts[k]->flatten(), test::fd_gradient(loss, nets[k]->flat_parameters())));
      }
    }
    {
      agents::SacConfig sc;
      sc.hidden_width = 8;
      const agents::SacAgent agent(spec, sc, p);
      const auto& n = agent.nets();
      const Matrix S = test::random_matrix(rng, 4, 5), A = test::random_matrix(rng, 2, 5, 0.5);
      const Vector y = test::random_vector(rng, 5);
      numeric::MlpGrads gq;
      agents::sac_critic_loss(n.q1, S, A, y, &gq);
      auto qloss = [&](const Vector& th) {
        numeric::Mlp q = n.q1;
        q.set_flat_parameters(th);
        return agents::sac_critic_loss(q, S, A, y, nullptr);
      };
      worst_sac = std::max(worst_sac, test::max_rel_error(gq.flatten(), test::fd_gradient(qloss, n.q1.flat_parameters())));
      const Matrix noise = test::random_matrix(rng, 2, 5);
      const double alpha = std::exp(rng.uniform(-3.0, 0.0));
      numeric::MlpGrads ga;
      double mlp = 0.0;
      agents::sac_actor_loss(n.actor, n.q1, n.q2, alpha, agent.scale(), S, noise, &ga, &mlp);
      auto aloss = [&](const Vector& th) {
        numeric::Mlp actor = n.actor;
        actor.set_flat_parameters(th);
        return agents::sac_actor_loss(actor, n.q1, n.q2, alpha, agent.scale(), S, noise, nullptr);
      };
      worst_sac = std::max(worst_sac, test::max_rel_error(ga.flatten(), test::fd_gradient(aloss, n.actor.flat_parameters())));
      const double la = rng.uniform(-2.0, 1.0), h = 1e-5;
      double gl = 0.0;
      agents::sac_alpha_loss(la, mlp, -2.0, &gl);
      const double fd = (agents::sac_alpha_loss(la + h, mlp, -2.0, nullptr) - agents::sac_alpha_loss(la - h, mlp, -2.0, nullptr)) / (2 * h);
      worst_sac = std::max(worst_sac, std::abs(gl - fd) / std::max({1.0, std::abs(gl), std::abs(fd)}));
    }
    {
      agents::PpoConfig pc;
      pc.hidden_width = 8;
      const agents::PpoAgent agent(spec, pc, p);
      const auto& nets = agent.nets();
      agents::PpoBatch b;
      const int n = 9;
      b.states = test::random_matrix(rng, 4, n);
      b.actions = test::random_matrix(rng, 2, n);
      b.advantages = test::random_vector(rng, n);
      b.returns = test::random_vector(rng, n);
      b.fema_selected.resize(n);
      for (int i = 0; i < n; ++i) b.fema_selected[static_cast<std::size_t>(i)] = rng.uniform() < 0.3;
      b.log_prob_old.resize(n);
      const auto pi = agent.policy();
      for (int i = 0; i < n; ++i) b.log_prob_old[i] = pi.log_prob(b.states.col(i), b.actions.col(i)) + 0.5 * rng.normal();
      const agents::PpoLossSettings st{0.2, 0.5, 0.01, p % 2 == 1};
      agents::PpoGrads g;
      agents::ppo_loss(nets, b, st, &g);
      auto with_mean = [&](const Vector& th) {
        agents::PpoNets c = nets;
        c.mean_net.set_flat_parameters(th);
        return agents::ppo_loss(c, b, st, nullptr).total;
      };
      auto with_value = [&](const Vector& th) {
        agents::PpoNets c = nets;
        c.value.set_flat_parameters(th);
        return agents::ppo_loss(c, b, st, nullptr).total;
      };
      auto with_ls = [&](const Vector& ls) {
        agents::PpoNets c = nets;
        c.log_std = ls;
        return agents::ppo_loss(c, b, st, nullptr).total;
      };
      worst_ppo = std::max({worst_ppo,
                            test::max_rel_error(g.mean.flatten(), test::fd_gradient(with_mean, nets.mean_net.flat_parameters())),
                            test::max_rel_error(g.value.flatten(), test::fd_gradient(with_value, nets.value.flat_parameters())),
                            test::max_rel_error(g.log_std, test::fd_gradient(with_ls, nets.log_std))});
    }
  }
  const double worst = std::max({worst_risk, worst_sac, worst_ppo});
  return {worst < 1e-4, "20 parameterizations; max rel error risk " + fmt("%.2e", worst_risk) + ", sac " +
                            fmt("%.2e", worst_sac) + ", ppo " + fmt("%.2e", worst_ppo)};
}

// ---------------------------------------------------------------- 4
std::vector<std::size_t> scan_oracle(const memory::Generation& g, const Vector& q, double eps, int O) {
  std::vector<std::size_t> hit;
  for (std::size_t i = 0; i < g.size(); ++i) {
    double d2 = 0.0;
    for (Eigen::Index k = 0; k < q.size(); ++k) {
      const double d = g.z_s(k, static_cast<Eigen::Index>(i)) - q[k];
      d2 += d * d;
    }
    if (std::sqrt(d2) <= eps) hit.push_back(i);
  }
  std::stable_sort(hit.begin(), hit.end(), [&](auto a, auto b) {
    return g.H[static_cast<Eigen::Index>(a)] < g.H[static_cast<Eigen::Index>(b)];
  });
  if (hit.size() > static_cast<std::size_t>(O)) hit.resize(static_cast<std::size_t>(O));
  return hit;
}

Outcome retrieval_oracle() {
  Rng rng(104);
  int mismatches = 0;
  std::size_t nonempty = 0, total = 0;
  for (int store = 0; store < 100; ++store) {
    memory::Generation g;
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(10000));
    const Eigen::Index dz = 2 + static_cast<Eigen::Index>(rng.below(7));
    g.z_s = test::random_matrix(rng, dz, n);
    g.H = Vector(n);
    // coarse H values force plenty of ties
    for (Eigen::Index i = 0; i < n; ++i) g.H[i] = std::round(4.0 * rng.normal()) / 4.0;
    for (int q = 0; q < 100; ++q) {
      const Vector z = test::random_vector(rng, dz);
      const double eps = rng.uniform(0.0, 1.5 * std::sqrt(static_cast<double>(dz)));
      const int O = 1 + static_cast<int>(rng.below(64));
      const auto got = memory::retrieve_from(g, z, eps, O);
      if (got != scan_oracle(g, z, eps, O)) ++mismatches;
      nonempty += got.empty() ? 0 : 1;
      ++total;
    }
  }
  return {mismatches == 0, std::to_string(total) + " queries over 100 stores, " + std::to_string(mismatches) +
                               " mismatches, " + std::to_string(nonempty) + " non-empty"};
}

// ---------------------------------------------------------------- 5
// Forwards to an inner env and records every action it receives.
class RecordingEnv final : public envs::Env {
 public:
  RecordingEnv(std::unique_ptr<envs::Env> inner, std::vector<Vector>* log) : inner_(std::move(inner)), log_(log) {}
  const envs::EnvSpec& spec() const override { return inner_->spec(); }
  Vector reset() override { return inner_->reset(); }
  envs::StepResult step(const Vector& action) override {
    log_->push_back(action);
    return inner_->step(action);
  }

 private:
  std::unique_ptr<envs::Env> inner_;
  std::vector<Vector>* log_;
};

struct Trajectory {
  std::vector<Vector> actions;
  std::vector<std::string> log;  // episode and loss records without memory fields
};

std::string episode_line(const agents::EpisodeSummary& e) {
  std::ostringstream o;
  o.precision(17);
  o << "episode " << e.id << ' ' << e.step << ' ' << e.length << ' ' << e.total_return << ' ' << to_string(e.end);
  return o.str();
}

std::string loss_line(const agents::LossSummary& l) {
  std::ostringstream o;
  o.precision(17);
  o << "loss " << l.step << ' ' << l.updates;
  for (const auto& [k, v] : l.values) o << ' ' << k << '=' << v;
  return o.str();
}

// variant: 0 reference (no hook), 1 hook disabled, 2 N=1, 3 eps=0, 4 cold memory
Trajectory inertness_run(const std::string& agent, int variant, std::uint64_t steps, std::uint64_t seed) {
  harness::RunConfig rc;
  const auto spec = envs::env_spec("cliff_corridor");
  std::unique_ptr<agents::FemaHook> hook;
  if (variant > 0) {
    memory::FemaConfig fc;
    fc.update_every = 5;
    fc.enabled = variant != 1;
    if (variant == 2) fc.candidates = 1;
    if (variant == 3) fc.epsilon = 0.0;
    if (variant == 4) fc.update_every = fc.capacity = 1000000;  // never publishes
    hook = std::make_unique<agents::FemaHook>(fc, rc.embedding_config(spec.state_dim, spec.action_dim), seed);
    hook->set_state_scale(spec.state_scale);
  }
  Trajectory tr;
  auto on_ep = [&](const agents::EpisodeSummary& e) { tr.log.push_back(episode_line(e)); };
  auto on_loss = [&](const agents::LossSummary& l) { tr.log.push_back(loss_line(l)); };
  if (agent == "sac") {
    agents::SacTrainer t(std::make_unique<RecordingEnv>(envs::make_env("cliff_corridor", Rng::derive(seed, 30).next_u64()), &tr.actions),
                         agents::SacConfig{}, std::move(hook), seed);
    t.train(steps, on_ep, on_loss);
  } else {
    agents::PpoConfig pc;
    std::vector<std::unique_ptr<envs::Env>> list;
    // one shared action log is fine: workers step in a fixed order without threads
    pc.parallel = false;
    for (int w = 0; w < pc.workers; ++w)
      list.push_back(std::make_unique<RecordingEnv>(
          envs::make_env("cliff_corridor", Rng::derive(seed, 30 + static_cast<std::uint64_t>(w)).next_u64()), &tr.actions));
    agents::PpoTrainer t(std::move(list), pc, std::move(hook), seed);
    t.train(steps, on_ep, on_loss);
  }
  return tr;
}

Outcome baseline_inertness() {
  const char* names[] = {"reference", "disabled", "N=1", "eps=0", "cold"};
  std::string detail;
  bool ok = true;
  for (const std::string agent : {"sac", "ppo"}) {
    const std::uint64_t steps = 10000;
    const Trajectory ref = inertness_run(agent, 0, steps, 3);
    detail += agent + ": " + std::to_string(ref.actions.size()) + " actions";
    for (int v = 1; v <= 4; ++v) {
      const Trajectory t = inertness_run(agent, v, steps, 3);
      const bool same = t.actions.size() == ref.actions.size() &&
                        std::equal(t.actions.begin(), t.actions.end(), ref.actions.begin(),
                                   [](const Vector& a, const Vector& b) { return a == b; }) &&
                        t.log == ref.log;
      ok = ok && same;
      detail += std::string(", ") + names[v] + (same ? " identical" : " DIFFERS");
      if (!same) {
        std::size_t i = 0;
        while (i < std::min(t.actions.size(), ref.actions.size()) && t.actions[i] == ref.actions[i]) ++i;
        std::size_t j = 0;
        while (j < std::min(t.log.size(), ref.log.size()) && t.log[j] == ref.log[j]) ++j;
        detail += " (first action diff " + std::to_string(i) + ", first log diff " + std::to_string(j) + ": " +
                  (j < t.log.size() ? t.log[j] : "") + " | " + (j < ref.log.size() ? ref.log[j] : "") + ")";
      }
    }
    detail += "; ";
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- 6
double risk_ordering(std::uint64_t seed) {
  embedding::EmbeddingConfig cfg;
  cfg.dims = {2, 1, 16, 8, 32};
  cfg.epochs = 100;
  embedding::EmbeddingStack stack(cfg, seed);
  Rng rng = Rng::derive(seed, 99);
  auto make = [&](int n) {
    embedding::RiskBatch b{Matrix(2, n), Matrix(1, n), Vector(n)};
    for (int i = 0; i < n; ++i) {
      b.states.col(i) = test::random_vector(rng, 2);
      b.actions(0, i) = rng.uniform(-1.0, 1.0);
      b.returns[i] = -b.states.col(i).norm();  // strictly decreasing in |s|
    }
    return b;
  };
  const auto train = make(1000), held = make(200);
  stack.train_risk(train, rng);
  const Vector rho = stack.risk(stack.joint_embed(stack.encode_states(held.states), stack.encode_actions(held.actions)));
  return test::spearman(rho, -held.returns);
}

Outcome risk_ordering_property() {
  double worst = 1.0;
  std::string detail = "spearman per seed:";
  for (std::uint64_t s = 0; s < 5; ++s) {
    const double r = risk_ordering(s);
    worst = std::min(worst, r);
    detail += " " + fmt("%.3f", r);
  }
  return {worst >= 0.9, detail};
}

// ---------------------------------------------------------------- 7
class FixedPolicy final : public selection::StochasticPolicy {
 public:
  FixedPolicy(Vector mean, Vector std) : p_{std::move(mean), std::move(std)} {}
  selection::GaussianParams distribution(const Vector&) const override { return p_; }
  Vector squash(const Vector& u) const override { return u; }

 private:
  selection::GaussianParams p_;
};

Outcome scoring_exactness() {
  Rng rng(107);
  int scenarios = 0, bad_score = 0, bad_argmax = 0, fallbacks = 0;
  for (int m = 0; m < 10; ++m) {
    embedding::EmbeddingConfig ec;
    ec.dims = {3, 2, 4, 3, 6};
    ec.hidden_width = 8;
    ec.epochs = 3;
    memory::FemaConfig fc;
    fc.update_every = 4;
    fc.suffix_len = 8;
    fc.epsilon = memory::kUnboundedEpsilon;
    embedding::EmbeddingStack stack(ec, 200 + static_cast<std::uint64_t>(m));
    memory::FailureMemory mem(ec.dims, fc);
    for (int e = 0; e < 4; ++e) {
      std::vector<Transition> ep;
      const int T = 2 + static_cast<int>(rng.below(12));
      for (int t = 0; t < T; ++t)
        ep.push_back({test::random_vector(rng, 3), test::random_vector(rng, 2), rng.normal(), test::random_vector(rng, 3),
                      t == T - 1 ? EndTag::hazard : EndTag::none});
      mem.stage(*memory::capture_failure(ep, fc, static_cast<std::uint64_t>(e), static_cast<std::uint64_t>(e)));
    }
    Rng train(300 + static_cast<std::uint64_t>(m));
    mem.update(stack, train);
    const auto snap = mem.published()->stack;
    for (int k = 0; k < 100; ++k, ++scenarios) {
      memory::FemaConfig c = fc;
      c.candidates = 2 + static_cast<int>(rng.below(15));
      c.top_o = 1 + static_cast<int>(rng.below(10));
      c.lambda_risk = std::exp(rng.uniform(-4.0, 3.0));
      c.aggregator = static_cast<memory::DistanceAggregator>(rng.below(3));
      c.epsilon = rng.uniform() < 0.2 ? 0.0 : memory::kUnboundedEpsilon;
      const FixedPolicy pi(test::random_vector(rng, 2), test::random_vector(rng, 2).cwiseAbs());
      const Vector s = test::random_vector(rng, 3);
      const auto sel = selection::select(s, pi, mem, snap, c, rng);
      if (sel.trace.fallback) {
        ++fallbacks;
        continue;
      }
      std::vector<double> scores, shifted;
      const double shift = 1e3 * rng.normal();
      for (const auto& cand : sel.trace.candidates) {
        if (cand.score != cand.distance - sel.trace.lambda_risk * cand.risk) ++bad_score;
        scores.push_back(cand.score);
        shifted.push_back(cand.score + shift);
      }
      const auto best = selection::argmax_score(scores);
      if (best != sel.trace.chosen || selection::argmax_score(shifted) != best) ++bad_argmax;
    }
  }
  return {bad_score == 0 && bad_argmax == 0,
          std::to_string(scenarios) + " scenarios (" + std::to_string(fallbacks) + " fallbacks), " +
              std::to_string(bad_score) + " score mismatches, " + std::to_string(bad_argmax) + " argmax mismatches"};
}

// ---------------------------------------------------------------- 8
double mean(const std::vector<double>& a) {
  double m = 0.0;
  for (double x : a) m += x;
  return a.empty() ? 0.0 : m / static_cast<double>(a.size());
}

Outcome efficacy(const fs::path& work) {
  const auto on_cfg = harness::load_config(source_dir() / "configs" / "cliff_sac.ini");
  const auto off_cfg = harness::load_config(source_dir() / "configs" / "cliff_sac_off.ini");
  harness::cmd_train(on_cfg, work / "c8_on");
  harness::cmd_train(off_cfg, work / "c8_off");
  const std::uint64_t T = on_cfg.total_steps;
  const auto on = harness::window_lengths(harness::load_variant(work / "c8_on", "on"), T / 3, 2 * T / 3);
  const auto off = harness::window_lengths(harness::load_variant(work / "c8_off", "off"), T / 3, 2 * T / 3);
  const double mon = mean(on), moff = mean(off);
  int wins = 0;
  std::string per;
  for (std::size_t i = 0; i < on.size(); ++i) {
    wins += on[i] > off[i] ? 1 : 0;
    per += " " + fmt("%.0f", on[i]) + "/" + fmt("%.0f", off[i]);
  }
  const double ratio = mon / moff;
  return {ratio >= 1.2 && wins >= 4, "middle-third mean length on " + fmt("%.1f", mon) + " vs off " + fmt("%.1f", moff) +
                                         " (ratio " + fmt("%.3f", ratio) + "), wins " + std::to_string(wins) +
                                         "/5, on/off per seed:" + per};
}

// ---------------------------------------------------------------- 9
Outcome ablation_direction(const fs::path& work) {
  const auto cfg = harness::load_config(source_dir() / "configs" / "cliff_sac.ini");
  const double e = cfg.fema.epsilon;
  const std::vector<std::string> values = {fmt("%.6g", 0.001 * e), fmt("%.6g", e), fmt("%.6g", 10.0 * e)};
  const fs::path sweep = work / "c9";
  // the default cell is the criterion 8 FEMA-on run; copying lets run_seed reuse it
  const fs::path c8 = work / "c8_on";
  if (fs::exists(c8) && !fs::exists(sweep / ("epsilon_" + values[1]))) {
    fs::create_directories(sweep);
    fs::copy(c8, sweep / ("epsilon_" + values[1]), fs::copy_options::recursive);
  }
  harness::cmd_ablate(cfg, sweep, "epsilon", values);
  const auto rep = harness::cmd_report(sweep);
  std::vector<std::optional<std::uint64_t>> steps;
  for (const auto& v : values) {
    const auto it = std::find(rep.variants.begin(), rep.variants.end(), "epsilon_" + v);
    if (it == rep.variants.end()) return {false, "variant epsilon_" + v + " missing from the report"};
    steps.push_back(rep.steps_to_threshold[static_cast<std::size_t>(it - rep.variants.begin())]);
  }
  auto show = [](const std::optional<std::uint64_t>& s) { return s ? std::to_string(*s) : std::string("never"); };
  auto faster = [](const std::optional<std::uint64_t>& a, const std::optional<std::uint64_t>& b) {
    return a && (!b || *a < *b);
  };
  const bool ok = faster(steps[1], steps[0]) && faster(steps[1], steps[2]);
  return {ok, "steps to return " + fmt("%g", cfg.report.threshold_return) + ": eps " + values[0] + " -> " +
                  show(steps[0]) + ", eps " + values[1] + " -> " + show(steps[1]) + ", eps " + values[2] + " -> " +
                  show(steps[2])};
}

// ---------------------------------------------------------------- 10
Outcome memory_lifecycle(const fs::path& work) {
  embedding::EmbeddingConfig ec;
  ec.dims = {3, 2, 4, 3, 5};
  ec.hidden_width = 8;
  ec.epochs = 3;
  memory::FemaConfig fc;
  fc.update_every = 4;
  fc.suffix_len = 5;
  fc.capacity = 10;
  fc.epsilon = memory::kUnboundedEpsilon;
  agents::FemaHook hook(fc, ec, 11);
  Rng rng(110);
  std::uint64_t id = 0;
  auto hazard_episode = [&] {
    std::vector<Transition> ep;
    const int T = 3 + static_cast<int>(rng.below(8));
    for (int t = 0; t < T; ++t)
      ep.push_back({test::random_vector(rng, 3), test::random_vector(rng, 2), rng.normal(), test::random_vector(rng, 3),
                    t == T - 1 ? EndTag::hazard : EndTag::none});
    return ep;
  };
  std::vector<Vector> queries;
  for (int q = 0; q < 20; ++q) queries.push_back(test::random_vector(rng, 4));
  auto answers = [&] {
    std::vector<std::vector<std::size_t>> out;
    for (const auto& q : queries) out.push_back(hook.memory().retrieve(q).ids);
    return out;
  };
  std::vector<std::string> failures;

  // first round: cold until the Mth event
  for (int round = 0; round < 6; ++round) {
    const auto before = answers();
    const auto gen_before = hook.memory().published();
    for (int k = 0; k < fc.update_every - 1; ++k) {
      hook.on_episode_end(hazard_episode(), id, id * 100);
      ++id;
      hook.update_if_due();
      if (answers() != before || hook.memory().published() != gen_before) failures.push_back("staging changed retrieval");
    }
    hook.on_episode_end(hazard_episode(), id, id * 100);
    ++id;
    if (!hook.update_if_due()) failures.push_back("Mth event did not trigger an update");
    const auto gen = hook.memory().published();
    if (!gen || gen == gen_before) {
      failures.push_back("no publication");
      continue;
    }
    for (std::size_t i = 0; i < gen->size(); ++i)
      if (gen->record(i).version != gen->version) failures.push_back("mixed embedding versions");
    const auto stored = hook.memory().stored_events();
    if (stored.size() > static_cast<std::size_t>(fc.capacity)) failures.push_back("capacity exceeded");
    // FIFO: exactly the newest events survive, in capture order
    for (std::size_t i = 0; i < stored.size(); ++i)
      if (stored[i].episode_id != id - stored.size() + i) failures.push_back("eviction is not FIFO");
  }
  fs::create_directories(work);
  const fs::path snap = work / "c10_memory.bin";
  hook.memory().snapshot(snap);
  const auto back = memory::FailureMemory::load(snap, ec.dims, fc);
  int bit_exact = 0;
  for (const auto& q : queries) {
    const auto a = hook.memory().retrieve(q), b = back->retrieve(q);
    bool same = a.ids == b.ids;
    for (std::size_t i = 0; same && i < a.ids.size(); ++i)
      same = a.generation->phi.col(static_cast<Eigen::Index>(a.ids[i])) == b.generation->phi.col(static_cast<Eigen::Index>(b.ids[i])) &&
             a.generation->H[static_cast<Eigen::Index>(a.ids[i])] == b.generation->H[static_cast<Eigen::Index>(b.ids[i])];
    bit_exact += same ? 1 : 0;
  }
  if (bit_exact != static_cast<int>(queries.size())) failures.push_back("snapshot round-trip differs");
  std::set<std::string> unique(failures.begin(), failures.end());
  std::string detail = "6 rounds of M=4 events, capacity 10, " + std::to_string(bit_exact) + "/20 reloaded queries exact";
  for (const auto& f : unique) detail += "; " + f;
  return {failures.empty(), detail};
}

// ---------------------------------------------------------------- 11
Outcome determinism(const fs::path& work) {
  std::string detail;
  bool ok = true;
  for (const std::string agent : {"sac", "ppo"}) {
    auto cfg = harness::load_config(source_dir() / "configs" / "cliff_sac.ini");
    cfg.agent = agent;
    cfg.seeds = {7};
    cfg.total_steps = 10000;
    cfg.fema.update_every = 5;
    const fs::path a = work / ("c11_" + agent + "_a"), b = work / ("c11_" + agent + "_b");
    fs::remove_all(a);
    fs::remove_all(b);
    harness::cmd_train(cfg, a);
    harness::cmd_train(cfg, b);
    const std::string la = slurp(harness::seed_dir(a, 7) / "metrics.jsonl");
    const bool same = !la.empty() && la == slurp(harness::seed_dir(b, 7) / "metrics.jsonl");
    ok = ok && same;
    detail += agent + " 10k-step FEMA run: " + std::to_string(la.size()) + " log bytes " + (same ? "identical" : "DIFFER") + "; ";
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FEMA acceptance criteria"};
  std::string work_arg;
  std::vector<int> only;
  app.add_option("--work", work_arg, "directory for training runs");
  app.add_option("--only", only, "criteria to run")->delimiter(',');
  CLI11_PARSE(app, argc, argv);
  const fs::path work = work_arg.empty() ? fs::temp_directory_path() / "fema_acceptance" : fs::path(work_arg);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"Monte Carlo return oracle", monte_carlo_returns_oracle},
      {"return normalization", normalization},
      {"gradient check", gradient_check},
      {"retrieval oracle equivalence", retrieval_oracle},
      {"baseline inertness", baseline_inertness},
      {"risk ordering", risk_ordering_property},
      {"scoring exactness", scoring_exactness},
      {"desk-scale efficacy", [&] { return efficacy(work); }},
      {"epsilon ablation direction", [&] { return ablation_direction(work); }},
      {"memory lifecycle", [&] { return memory_lifecycle(work); }},
      {"determinism", [&] { return determinism(work); }},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int number = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), number) == only.end()) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failed += o.pass ? 0 : 1;
    std::printf("criterion %2d %s  %s: %s [%.1f s]\n", number, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str(), secs);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
