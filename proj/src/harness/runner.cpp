#include "fema/harness/runner.hpp"

#include "fema/agents/ppo.hpp"
#include "fema/agents/sac.hpp"
#include "fema/envs/env.hpp"
#include "fema/error.hpp"
#include "fema/harness/report.hpp"

#include "json.hpp"

#include <atomic>
#include <deque>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <thread>

namespace fema::harness {

namespace {

using nlohmann::json;

constexpr std::array<char, 4> kCheckpointMagic{'F', 'C', 'K', 'P'};
constexpr std::uint32_t kCheckpointVersion = 1;

// Stream ids for Rng::derive; kept apart from the agents' own ids.
constexpr std::uint64_t kEnvStream = 30;
constexpr std::uint64_t kEvalStream = 21;

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw RunError("cannot write " + p.string());
  out << text;
}

RunConfig single_seed(const RunConfig& cfg, std::uint64_t seed) {
  RunConfig c = cfg;
  c.seeds = {seed};
  return c;
}

class Trailing {
 public:
  explicit Trailing(int window) : window_(static_cast<std::size_t>(window)) {}
  double push(double v) {
    values_.push_back(v);
    if (values_.size() > window_) values_.pop_front();
    // summed afresh each time; a running sum drifts
    return std::accumulate(values_.begin(), values_.end(), 0.0) / static_cast<double>(values_.size());
  }

 private:
  std::size_t window_;
  std::deque<double> values_;
};

struct EvalStats {
  double mean_return = 0.0;
  double mean_length = 0.0;
  double hazard_rate = 0.0;
};

template <class Agent>
std::vector<EvalEpisode> rollout_eval(const Agent& agent, envs::Env& env, int episodes) {
  std::vector<EvalEpisode> rows;
  for (int e = 0; e < episodes; ++e) {
    EvalEpisode row;
    row.episode = e;
    Vector s = env.reset();
    for (;;) {
      const envs::StepResult r = env.step(agent.act_eval(s));
      row.total_return += r.reward;
      ++row.length;
      s = r.next_state;
      if (r.end != EndTag::none) {
        row.end = r.end;
        break;
      }
    }
    rows.push_back(row);
  }
  return rows;
}

EvalStats summarize(const std::vector<EvalEpisode>& rows) {
  EvalStats st;
  if (rows.empty()) return st;
  for (const auto& r : rows) {
    st.mean_return += r.total_return;
    st.mean_length += r.length;
    st.hazard_rate += r.end == EndTag::hazard ? 1.0 : 0.0;
  }
  const auto n = static_cast<double>(rows.size());
  st.mean_return /= n;
  st.mean_length /= n;
  st.hazard_rate /= n;
  return st;
}

class RunLogger {
 public:
  RunLogger(const fs::path& path, int window) : out_(path, std::ios::binary | std::ios::trunc), ret_(window), len_(window) {
    if (!out_) throw RunError("cannot write " + path.string());
  }

  void header(const RunConfig& cfg, std::uint64_t seed) {
    write({{"type", "run"}, {"seed", seed}, {"agent", cfg.agent}, {"env", cfg.env},
           {"total_steps", cfg.total_steps}, {"fema", cfg.fema.enabled}});
  }

  void episode(const agents::EpisodeSummary& e) {
    const double rr = ret_.push(e.total_return);
    const double rl = len_.push(e.length);
    write({{"type", "episode"},
           {"step", e.step},
           {"episode", e.id},
           {"return", e.total_return},
           {"length", e.length},
           {"end", std::string(to_string(e.end))},
           {"rolling_return", rr},
           {"rolling_length", rl},
           {"fallback_rate", e.fallback_rate},
           {"staged", e.staged},
           {"memory_records", e.memory_records},
           {"memory_updates", e.memory_updates}});
  }

  void loss(const agents::LossSummary& l) {
    json j{{"type", "loss"}, {"step", l.step}, {"updates", l.updates}};
    for (const auto& [k, v] : l.values) j[k] = v;
    write(j);
  }

  void eval(std::uint64_t step, const EvalStats& st, int episodes) {
    write({{"type", "eval"},
           {"step", step},
           {"episodes", episodes},
           {"mean_return", st.mean_return},
           {"mean_length", st.mean_length},
           {"hazard_rate", st.hazard_rate}});
  }

 private:
  void write(const json& j) { out_ << j.dump() << '\n'; }

  std::ofstream out_;
  Trailing ret_, len_;
};

void write_checkpoint(const fs::path& path, const RunConfig& cfg, const envs::EnvSpec& spec,
                      const std::function<void(numeric::BinaryWriter&)>& write_agent, const agents::FemaHook* hook,
                      const std::vector<std::string>& rng_states) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RunError("cannot write " + path.string());
  numeric::BinaryWriter w(out);
  w.magic(kCheckpointMagic);
  w.u32(kCheckpointVersion);
  w.string(cfg.agent);
  w.string(cfg.env);
  w.u32(static_cast<std::uint32_t>(spec.state_dim));
  w.u32(static_cast<std::uint32_t>(spec.action_dim));
  write_agent(w);
  w.u8(hook ? 1 : 0);
  if (hook) {
    const auto& ec = hook->stack().config();
    w.u32(static_cast<std::uint32_t>(ec.hidden_width));
    w.f64(ec.adam.lr);
    w.u32(static_cast<std::uint32_t>(ec.epochs));
    w.u32(static_cast<std::uint32_t>(ec.batch_size));
    hook->stack().write(w);
  }
  w.u64(rng_states.size());
  for (const auto& s : rng_states) w.string(s);
}

struct CheckpointHeader {
  std::string agent;
  std::string env;
  int state_dim = 0;
  int action_dim = 0;
};

template <class Trainer>
void train_loop(Trainer& trainer, const RunConfig& cfg, std::uint64_t seed, RunLogger& logger,
                const std::function<std::vector<EvalEpisode>()>& evaluate) {
  std::uint64_t next_eval = cfg.eval_every;
  auto maybe_eval = [&](std::uint64_t steps) {
    while (cfg.eval_episodes > 0 && next_eval <= steps && next_eval <= cfg.total_steps) {
      logger.eval(next_eval, summarize(evaluate()), cfg.eval_episodes);
      next_eval += cfg.eval_every;
    }
  };
  (void)seed;
  if constexpr (std::is_same_v<Trainer, agents::SacTrainer>) {
    while (trainer.steps() < cfg.total_steps) {
      logger.episode(trainer.run_episode([&](const agents::LossSummary& l) { logger.loss(l); }, cfg.total_steps));
      maybe_eval(trainer.steps());
    }
  } else {
    const auto rollout = static_cast<std::uint64_t>(cfg.ppo.rollout_steps);
    while (trainer.steps() < cfg.total_steps) {
      const auto n = static_cast<std::size_t>(std::min(rollout, cfg.total_steps - trainer.steps()));
      for (const auto& e : trainer.iterate(n, [&](const agents::LossSummary& l) { logger.loss(l); }))
        logger.episode(e);
      maybe_eval(trainer.steps());
    }
    for (const auto& e : trainer.finish()) logger.episode(e);
  }
}

void run_cells(std::vector<std::function<void()>>& cells, int jobs) {
  if (jobs <= 1 || cells.size() <= 1) {
    for (auto& c : cells) c();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(cells.size());
  std::vector<std::thread> pool;
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(jobs), cells.size());
  for (std::size_t t = 0; t < n; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < cells.size(); i = next++) {
        try {
          cells[i]();
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

fs::path seed_dir(const fs::path& run_dir, std::uint64_t seed) { return run_dir / ("seed_" + std::to_string(seed)); }

SeedRunResult run_seed(const RunConfig& base, std::uint64_t seed, const fs::path& dir, std::ostream* log) {
  const RunConfig cfg = single_seed(base, seed);
  cfg.validate();
  const std::string cfg_text = cfg.to_text();
  SeedRunResult result;
  result.dir = dir;

  const fs::path done = dir / "done.json";
  if (fs::exists(done) && read_text(dir / "config.ini") == cfg_text && fs::exists(dir / "metrics.jsonl")) {
    const json j = json::parse(read_text(done));
    result.steps = j.at("steps").get<std::uint64_t>();
    result.episodes = j.at("episodes").get<std::uint64_t>();
    result.reused = true;
    return result;
  }

  fs::create_directories(dir);
  fs::remove(done);
  fs::remove(dir / "memory.bin");
  write_text(dir / "config.ini", cfg_text);

  const envs::EnvSpec spec = envs::env_spec(cfg.env);
  auto make_hook = [&]() -> std::unique_ptr<agents::FemaHook> {
    if (!cfg.fema.enabled) return nullptr;
    auto hook = std::make_unique<agents::FemaHook>(cfg.fema, cfg.embedding_config(spec.state_dim, spec.action_dim), seed);
    hook->set_state_scale(spec.state_scale);
    return hook;
  };
  auto eval_env = [&] {
    return envs::make_env(cfg.env, numeric::Rng::derive(seed, kEvalStream).next_u64(), cfg.noise_scale);
  };

  RunLogger logger(dir / "metrics.jsonl", cfg.report.window);
  logger.header(cfg, seed);

  std::uint64_t steps = 0, episodes = 0;
  std::uint64_t episode_count = 0;
  if (cfg.agent == "sac") {
    agents::SacTrainer trainer(envs::make_env(cfg.env, numeric::Rng::derive(seed, kEnvStream).next_u64(), cfg.noise_scale),
                               cfg.sac, make_hook(), seed);
    train_loop(trainer, cfg, seed, logger, [&] {
      auto env = eval_env();
      return rollout_eval(trainer.agent(), *env, cfg.eval_episodes);
    });
    steps = trainer.steps();
    episode_count = trainer.episodes();
    write_checkpoint(dir / "checkpoint.bin", cfg, spec, [&](numeric::BinaryWriter& w) { trainer.agent().write(w); },
                     trainer.hook(), {trainer.action_rng().state(), trainer.learner_rng().state()});
    if (trainer.hook()) trainer.hook()->memory().snapshot(dir / "memory.bin");
  } else {
    std::vector<std::unique_ptr<envs::Env>> envs_list;
    for (int w = 0; w < cfg.ppo.workers; ++w)
      envs_list.push_back(envs::make_env(
          cfg.env, numeric::Rng::derive(seed, kEnvStream + static_cast<std::uint64_t>(w)).next_u64(), cfg.noise_scale));
    agents::PpoTrainer trainer(std::move(envs_list), cfg.ppo, make_hook(), seed);
    train_loop(trainer, cfg, seed, logger, [&] {
      auto env = eval_env();
      return rollout_eval(trainer.agent(), *env, cfg.eval_episodes);
    });
    steps = trainer.steps();
    episode_count = trainer.episodes();
    write_checkpoint(dir / "checkpoint.bin", cfg, spec, [&](numeric::BinaryWriter& w) { trainer.agent().write(w); },
                     trainer.hook(), {trainer.learner_rng().state()});
    if (trainer.hook()) trainer.hook()->memory().snapshot(dir / "memory.bin");
  }
  episodes = episode_count;

  write_text(done, json{{"seed", seed}, {"steps", steps}, {"episodes", episodes}}.dump() + "\n");
  result.steps = steps;
  result.episodes = episodes;
  if (log) *log << "seed " << seed << ": " << steps << " steps, " << episodes << " episodes -> " << dir.string() << '\n';
  return result;
}

fs::path cmd_train(RunConfig cfg, const fs::path& out_dir, std::uint64_t seed_offset, std::ostream* log) {
  for (auto& s : cfg.seeds) s += seed_offset;
  for (const auto& w : cfg.validate())
    if (log) *log << "warning: " << w << '\n';
  fs::create_directories(out_dir);
  write_text(out_dir / "config.ini", cfg.to_text());

  std::vector<SeedRunResult> results(cfg.seeds.size());
  std::mutex log_mutex;
  std::vector<std::function<void()>> cells;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    cells.emplace_back([&, i] {
      std::ostringstream local;
      results[i] = run_seed(cfg, cfg.seeds[i], seed_dir(out_dir, cfg.seeds[i]), &local);
      std::lock_guard lock(log_mutex);
      if (log) *log << local.str();
    });
  }
  run_cells(cells, cfg.jobs);

  json runs = json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    runs.push_back({{"seed", cfg.seeds[i]},
                    {"dir", seed_dir(fs::path{}, cfg.seeds[i]).string()},
                    {"steps", results[i].steps},
                    {"episodes", results[i].episodes},
                    {"complete", true}});
  }
  const json index{{"agent", cfg.agent},
                   {"env", cfg.env},
                   {"total_steps", cfg.total_steps},
                   {"fema", cfg.fema.enabled},
                   {"seeds", cfg.seeds},
                   {"runs", runs}};
  write_text(out_dir / "index.json", index.dump(2) + "\n");
  return out_dir;
}

std::vector<std::string> ablation_axes() { return {"epsilon", "n_candidates", "update_m", "top_o", "lambda_risk"}; }

std::pair<std::string, std::string> ablation_field(const std::string& axis) {
  if (axis == "epsilon") return {"fema", "epsilon"};
  if (axis == "n_candidates") return {"fema", "candidates"};
  if (axis == "update_m") return {"fema", "update_every"};
  if (axis == "top_o") return {"fema", "top_o"};
  if (axis == "lambda_risk") return {"fema", "lambda_risk"};
  throw UsageError("unknown ablation axis '" + axis + "' (epsilon|n_candidates|update_m|top_o|lambda_risk)");
}

fs::path cmd_ablate(const RunConfig& cfg, const fs::path& out_dir, const std::string& axis,
                    const std::vector<std::string>& values, std::ostream* log) {
  const auto [section, key] = ablation_field(axis);
  if (values.empty()) throw UsageError("ablate: empty value list");
  if (!cfg.fema.enabled) throw UsageError("ablate: axis '" + axis + "' requires fema.enabled = true");

  std::vector<RunConfig> variants;
  std::vector<std::string> names;
  for (const auto& v : values) {
    RunConfig c = cfg;
    set_config_value(c, section, key, v);
    c.validate();
    variants.push_back(c);
    names.push_back(axis + "_" + v);
  }
  fs::create_directories(out_dir);

  // Every (value, seed) cell is independent; run them all through one pool.
  std::vector<std::function<void()>> cells;
  std::mutex log_mutex;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    for (std::uint64_t seed : variants[v].seeds) {
      cells.emplace_back([&, v, seed] {
        std::ostringstream local;
        run_seed(variants[v], seed, seed_dir(out_dir / names[v], seed), &local);
        std::lock_guard lock(log_mutex);
        if (log) *log << names[v] << " " << local.str();
      });
    }
  }
  run_cells(cells, cfg.jobs);
  for (std::size_t v = 0; v < variants.size(); ++v) {
    RunConfig c = variants[v];
    c.jobs = 1;
    cmd_train(c, out_dir / names[v], 0, nullptr);  // completed seeds are reused; writes index.json
  }

  json sweep{{"axis", axis}, {"field", section + "." + key}, {"values", values}, {"variants", names},
             {"seeds", cfg.seeds}};
  write_text(out_dir / "sweep.json", sweep.dump(2) + "\n");
  cmd_report(out_dir, std::nullopt, log);
  return out_dir;
}

std::vector<EvalEpisode> cmd_eval(const fs::path& checkpoint, const std::string& env_kind, int episodes,
                                  std::uint64_t seed) {
  if (episodes < 0) throw UsageError("eval: episodes must be >= 0");
  std::ifstream in(checkpoint, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + checkpoint.string());
  numeric::BinaryReader r(in);
  r.expect_magic(kCheckpointMagic, "checkpoint");
  if (r.u32() != kCheckpointVersion) throw FormatError("checkpoint: unsupported version");
  CheckpointHeader h;
  h.agent = r.string();
  h.env = r.string();
  h.state_dim = static_cast<int>(r.u32());
  h.action_dim = static_cast<int>(r.u32());
  const envs::EnvSpec spec = envs::env_spec(env_kind);
  if (spec.state_dim != h.state_dim || spec.action_dim != h.action_dim)
    throw FormatError("checkpoint dims (" + std::to_string(h.state_dim) + ", " + std::to_string(h.action_dim) +
                      ") do not match environment '" + env_kind + "'");

  auto env = envs::make_env(env_kind, numeric::Rng::derive(seed, kEvalStream).next_u64());
  if (h.agent == "sac") {
    agents::SacAgent agent(spec, agents::SacConfig{}, 0);
    agent.read(r);
    return rollout_eval(agent, *env, episodes);
  }
  if (h.agent == "ppo") {
    agents::PpoAgent agent(spec, agents::PpoConfig{}, 0);
    agent.read(r);
    return rollout_eval(agent, *env, episodes);
  }
  throw FormatError("checkpoint: unknown agent kind '" + h.agent + "'");
}

std::string eval_table_csv(const std::vector<EvalEpisode>& rows) {
  std::ostringstream out;
  out << "episode,return,length,end\n";
  char buf[64];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.10g", r.total_return);
    out << r.episode << ',' << buf << ',' << r.length << ',' << to_string(r.end) << '\n';
  }
  return out.str();
}

}  // namespace fema::harness
