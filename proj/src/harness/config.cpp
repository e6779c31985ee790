#include "fema/harness/config.hpp"

#include "fema/envs/env.hpp"
#include "fema/error.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

extern char** environ;

namespace fema::harness {

namespace {

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string fmt_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(s);
  while (std::getline(in, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

double parse_double(const std::string& v) {
  if (v.empty()) throw ConfigError("expected a number, got an empty value");
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || errno == ERANGE || std::isnan(d))
    throw ConfigError("expected a number, got '" + v + "'");
  return d;
}

long long parse_int(const std::string& v) {
  if (v.empty()) throw ConfigError("expected an integer, got an empty value");
  char* end = nullptr;
  errno = 0;
  const long long i = std::strtoll(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || errno == ERANGE) throw ConfigError("expected an integer, got '" + v + "'");
  return i;
}

std::uint64_t parse_u64(const std::string& v) {
  const long long i = parse_int(v);
  if (i < 0) throw ConfigError("expected a non-negative integer, got '" + v + "'");
  return static_cast<std::uint64_t>(i);
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("expected true/false, got '" + v + "'");
}

// Nested member access: accessor returns a reference to the field.
template <class T>
using Accessor = std::function<T&(RunConfig&)>;

template <class T>
Field nested(std::string sec, std::string key, Accessor<T> acc) {
  auto get = [acc](const RunConfig& c) {
    const T& v = acc(const_cast<RunConfig&>(c));
    if constexpr (std::is_same_v<T, double>) return fmt_double(v);
    else if constexpr (std::is_same_v<T, bool>) return std::string(v ? "true" : "false");
    else if constexpr (std::is_same_v<T, std::string>) return v;
    else return std::to_string(v);
  };
  auto set = [acc](RunConfig& c, const std::string& v) {
    T& dst = acc(c);
    if constexpr (std::is_same_v<T, double>) dst = parse_double(v);
    else if constexpr (std::is_same_v<T, bool>) dst = parse_bool(v);
    else if constexpr (std::is_same_v<T, std::string>) dst = v;
    else if constexpr (std::is_signed_v<T>) {
      const long long i = parse_int(v);
      if (i < std::numeric_limits<T>::min() || i > std::numeric_limits<T>::max())
        throw ConfigError("integer out of range: '" + v + "'");
      dst = static_cast<T>(i);
    } else {
      dst = static_cast<T>(parse_u64(v));
    }
  };
  return {std::move(sec), std::move(key), get, set};
}

#define FIELD(sec, key, T, expr) nested<T>(sec, key, [](RunConfig& c) -> T& { return expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back(FIELD("run", "agent", std::string, c.agent));
    f.push_back({"run", "seeds",
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.seeds.size(); ++i) s += (i ? "," : "") + std::to_string(c.seeds[i]);
                   return s;
                 },
                 [](RunConfig& c, const std::string& v) {
                   c.seeds.clear();
                   for (const auto& p : split(v, ',')) c.seeds.push_back(parse_u64(p));
                 }});
    f.push_back(FIELD("run", "total_steps", std::uint64_t, c.total_steps));
    f.push_back(FIELD("run", "eval_every", std::uint64_t, c.eval_every));
    f.push_back(FIELD("run", "eval_episodes", int, c.eval_episodes));
    f.push_back(FIELD("run", "jobs", int, c.jobs));

    f.push_back(FIELD("env", "kind", std::string, c.env));
    f.push_back(FIELD("env", "noise_scale", double, c.noise_scale));

    f.push_back(FIELD("sac", "gamma", double, c.sac.gamma));
    f.push_back(FIELD("sac", "tau", double, c.sac.tau));
    f.push_back(FIELD("sac", "lr_actor", double, c.sac.lr_actor));
    f.push_back(FIELD("sac", "lr_critic", double, c.sac.lr_critic));
    f.push_back(FIELD("sac", "lr_alpha", double, c.sac.lr_alpha));
    f.push_back(FIELD("sac", "init_alpha", double, c.sac.init_alpha));
    f.push_back(FIELD("sac", "hidden_width", int, c.sac.hidden_width));
    f.push_back(FIELD("sac", "batch_size", int, c.sac.batch_size));
    f.push_back(FIELD("sac", "buffer_capacity", std::size_t, c.sac.buffer_capacity));
    f.push_back(FIELD("sac", "learning_starts", std::size_t, c.sac.learning_starts));
    f.push_back(FIELD("sac", "updates_per_step", int, c.sac.updates_per_step));
    f.push_back(FIELD("sac", "log_every", int, c.sac.log_every));

    f.push_back(FIELD("ppo", "gamma", double, c.ppo.gamma));
    f.push_back(FIELD("ppo", "gae_lambda", double, c.ppo.gae_lambda));
    f.push_back(FIELD("ppo", "clip_ratio", double, c.ppo.clip_ratio));
    f.push_back(FIELD("ppo", "lr", double, c.ppo.lr));
    f.push_back(FIELD("ppo", "epochs", int, c.ppo.epochs));
    f.push_back(FIELD("ppo", "minibatch_size", int, c.ppo.minibatch_size));
    f.push_back(FIELD("ppo", "rollout_steps", int, c.ppo.rollout_steps));
    f.push_back(FIELD("ppo", "workers", int, c.ppo.workers));
    f.push_back(FIELD("ppo", "vf_coef", double, c.ppo.vf_coef));
    f.push_back(FIELD("ppo", "ent_coef", double, c.ppo.ent_coef));
    f.push_back(FIELD("ppo", "target_kl", double, c.ppo.target_kl));
    f.push_back(FIELD("ppo", "init_log_std", double, c.ppo.init_log_std));
    f.push_back(FIELD("ppo", "hidden_width", int, c.ppo.hidden_width));
    f.push_back(FIELD("ppo", "importance_correction", bool, c.ppo.importance_correction));
    f.push_back(FIELD("ppo", "parallel", bool, c.ppo.parallel));

    f.push_back(FIELD("fema", "enabled", bool, c.fema.enabled));
    f.push_back(FIELD("fema", "suffix_len", int, c.fema.suffix_len));
    f.push_back(FIELD("fema", "update_every", int, c.fema.update_every));
    f.push_back(FIELD("fema", "candidates", int, c.fema.candidates));
    f.push_back(FIELD("fema", "epsilon", double, c.fema.epsilon));
    f.push_back(FIELD("fema", "top_o", int, c.fema.top_o));
    f.push_back(FIELD("fema", "lambda_risk", double, c.fema.lambda_risk));
    f.push_back(FIELD("fema", "gamma", double, c.fema.gamma));
    f.push_back(FIELD("fema", "capacity", int, c.fema.capacity));
    f.push_back({"fema", "aggregator", [](const RunConfig& c) { return std::string(memory::to_string(c.fema.aggregator)); },
                 [](RunConfig& c, const std::string& v) {
                   const auto a = memory::parse_aggregator(v);
                   if (!a) throw ConfigError("expected mean|min|sum, got '" + v + "'");
                   c.fema.aggregator = *a;
                 }});

    f.push_back(FIELD("embedding", "z_state", int, c.z_state));
    f.push_back(FIELD("embedding", "z_action", int, c.z_action));
    f.push_back(FIELD("embedding", "phi", int, c.phi));
    f.push_back(FIELD("embedding", "hidden_width", int, c.embed_hidden));
    f.push_back(FIELD("embedding", "lr", double, c.embed_lr));
    f.push_back(FIELD("embedding", "epochs", int, c.embed_epochs));
    f.push_back(FIELD("embedding", "batch_size", int, c.embed_batch));

    f.push_back(FIELD("report", "window", int, c.report.window));
    f.push_back(FIELD("report", "grid", int, c.report.grid));
    f.push_back({"report", "length_windows",
                 [](const RunConfig& c) {
                   std::string s;
                   for (std::size_t i = 0; i < c.report.length_windows.size(); ++i)
                     s += (i ? "," : "") + c.report.length_windows[i];
                   return s;
                 },
                 [](RunConfig& c, const std::string& v) { c.report.length_windows = split(v, ','); }});
    f.push_back(FIELD("report", "threshold_return", double, c.report.threshold_return));
    return f;
  }();
  return table;
}

#undef FIELD

const Field* find_field(const std::string& section, const std::string& key) {
  for (const auto& f : fields())
    if (f.section == section && f.key == key) return &f;
  return nullptr;
}

bool known_section(const std::string& s) {
  return std::any_of(fields().begin(), fields().end(), [&](const Field& f) { return f.section == s; });
}

std::string upper(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

}  // namespace

std::vector<std::string> RunConfig::validate() const {
  std::vector<std::string> warnings;
  if (agent != "sac" && agent != "ppo") throw ConfigError("run.agent must be sac or ppo, got '" + agent + "'");
  const auto kinds = envs::env_kinds();
  if (std::find(kinds.begin(), kinds.end(), env) == kinds.end())
    throw ConfigError("env.kind '" + env + "' is not a registered environment");
  if (seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
    throw ConfigError("run.seeds must be distinct");
  if (eval_every == 0) throw ConfigError("run.eval_every must be >= 1");
  if (eval_episodes < 0) throw ConfigError("run.eval_episodes must be >= 0");
  if (jobs < 1) throw ConfigError("run.jobs must be >= 1");
  if (!(noise_scale >= 0.0) || !std::isfinite(noise_scale)) throw ConfigError("env.noise_scale must be >= 0");
  sac.validate();
  ppo.validate();
  fema.validate();
  if (z_state < 1 || z_action < 1 || phi < 1 || embed_hidden < 1 || embed_epochs < 0 || embed_batch < 2)
    throw ConfigError("embedding sizes out of range");
  if (!(embed_lr >= 0.0)) throw ConfigError("embedding.lr must be >= 0");
  if (report.window < 1 || report.grid < 1) throw ConfigError("report.window and report.grid must be >= 1");
  for (const auto& w : report.length_windows) {
    const auto parts = split(w, ':');
    if (parts.size() != 2 || parse_u64(parts[0]) >= parse_u64(parts[1]))
      throw ConfigError("report.length_windows entries must be lo:hi with lo < hi, got '" + w + "'");
  }
  if (!fema.enabled && fema.candidates != 1)
    warnings.push_back("fema.candidates = " + std::to_string(fema.candidates) + " is unused while fema.enabled = false");
  const double agent_gamma = agent == "sac" ? sac.gamma : ppo.gamma;
  if (fema.enabled && fema.gamma != agent_gamma)
    warnings.push_back("fema.gamma differs from the agent discount");
  return warnings;
}

embedding::EmbeddingConfig RunConfig::embedding_config(int state_dim, int action_dim) const {
  embedding::EmbeddingConfig e;
  e.dims = {state_dim, action_dim, z_state, z_action, phi};
  e.hidden_width = embed_hidden;
  e.adam.lr = embed_lr;
  e.epochs = embed_epochs;
  e.batch_size = embed_batch;
  return e;
}

std::string RunConfig::to_text() const {
  std::ostringstream out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(*this) << '\n';
  }
  return out.str();
}

bool operator==(const RunConfig& a, const RunConfig& b) { return a.to_text() == b.to_text(); }

void set_config_value(RunConfig& cfg, const std::string& section, const std::string& key, const std::string& value) {
  const Field* f = find_field(section, key);
  if (!f) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
  try {
    f->set(cfg, value);
  } catch (const ConfigError& e) {
    throw ConfigError(section + "." + key + ": " + e.what());
  }
}

std::string get_config_value(const RunConfig& cfg, const std::string& section, const std::string& key) {
  const Field* f = find_field(section, key);
  if (!f) throw ConfigError("unknown key '" + key + "' in [" + section + "]");
  return f->get(cfg);
}

RunConfig parse_config_text(const std::string& text, const std::string& source) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  auto fail = [&](const std::string& msg) { throw ConfigError(source + ":" + std::to_string(lineno) + ": " + msg); };
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail("malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!known_section(section)) fail("unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected 'key = value'");
    if (section.empty()) fail("key outside of any section");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Field* f = find_field(section, key);
    if (!f) fail("unknown key '" + key + "' in [" + section + "]");
    try {
      f->set(cfg, value);
    } catch (const ConfigError& e) {
      fail(section + "." + key + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path.string());
}

void apply_env_overrides(RunConfig& cfg, const std::map<std::string, std::string>& env) {
  const std::string prefix = kEnvOverridePrefix;
  for (const auto& [name, value] : env) {
    if (name.rfind(prefix, 0) != 0) continue;
    const std::string rest = name.substr(prefix.size());
    const Field* match = nullptr;
    for (const auto& f : fields()) {
      if (upper(f.section) + "_" + upper(f.key) == rest) {
        match = &f;
        break;
      }
    }
    if (!match) throw ConfigError("environment override " + name + " does not name a config field");
    try {
      match->set(cfg, value);
    } catch (const ConfigError& e) {
      throw ConfigError("environment override " + name + ": " + e.what());
    }
  }
}

std::map<std::string, std::string> override_environment() {
  std::map<std::string, std::string> out;
  const std::string prefix = kEnvOverridePrefix;
  for (char** e = environ; e && *e; ++e) {
    const std::string entry = *e;
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    out[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return out;
}

}  // namespace fema::harness
