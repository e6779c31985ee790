#include "fema/harness/report.hpp"

#include "fema/error.hpp"
#include "fema/harness/runner.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

namespace fema::harness {

namespace {

using nlohmann::json;

std::string num(double v) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::pair<double, double> mean_std(const std::vector<double>& xs) {
  if (xs.empty()) return {std::nan(""), std::nan("")};
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / static_cast<double>(xs.size()))};
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw RunError("cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw RunError("cannot write " + p.string());
  out << text;
}

std::vector<std::pair<std::uint64_t, std::uint64_t>> length_windows(const RunConfig& cfg) {
  std::vector<std::pair<std::uint64_t, std::uint64_t>> out;
  for (const auto& w : cfg.report.length_windows) {
    const auto colon = w.find(':');
    out.emplace_back(std::stoull(w.substr(0, colon)), std::stoull(w.substr(colon + 1)));
  }
  if (out.empty()) out.emplace_back(cfg.total_steps / 3, 2 * cfg.total_steps / 3);
  return out;
}

}  // namespace

SeedLog read_seed_log(const fs::path& jsonl, std::uint64_t seed) {
  SeedLog log;
  log.seed = seed;
  std::ifstream in(jsonl);
  if (!in) throw RunError("missing metrics log " + jsonl.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception&) {
      break;  // a torn final line from an interrupted run
    }
    const std::string type = j.value("type", "");
    if (type == "episode") {
      EpisodeRow r;
      r.step = j.at("step").get<std::uint64_t>();
      r.total_return = j.at("return").get<double>();
      r.length = j.at("length").get<int>();
      r.end = j.at("end").get<std::string>();
      r.fallback_rate = j.value("fallback_rate", 1.0);
      log.episodes.push_back(r);
    } else if (type == "eval") {
      log.evals.push_back({j.at("step").get<std::uint64_t>(), j.at("mean_return").get<double>()});
    }
  }
  return log;
}

Variant load_variant(const fs::path& run_dir, const std::string& name) {
  Variant v;
  v.name = name;
  v.config = load_config(run_dir / "config.ini");
  for (std::uint64_t seed : v.config.seeds) {
    const fs::path dir = seed_dir(run_dir, seed);
    SeedLog log = fs::exists(dir / "metrics.jsonl") ? read_seed_log(dir / "metrics.jsonl", seed) : SeedLog{seed, {}, {}, false};
    log.complete = fs::exists(dir / "done.json");
    v.seeds.push_back(std::move(log));
  }
  return v;
}

std::vector<CurvePoint> learning_curve(const Variant& v, int window, int grid, std::uint64_t total_steps) {
  std::vector<CurvePoint> out;
  const auto w = static_cast<std::size_t>(window);
  std::vector<std::size_t> cursor(v.seeds.size(), 0);
  for (std::uint64_t g = static_cast<std::uint64_t>(grid); g <= total_steps; g += static_cast<std::uint64_t>(grid)) {
    std::vector<double> rets, lens, fbs;
    bool all = !v.seeds.empty();
    for (std::size_t s = 0; s < v.seeds.size(); ++s) {
      const auto& eps = v.seeds[s].episodes;
      while (cursor[s] < eps.size() && eps[cursor[s]].step <= g) ++cursor[s];
      if (cursor[s] == 0) {
        all = false;
        break;
      }
      const std::size_t lo = cursor[s] > w ? cursor[s] - w : 0;
      double r = 0.0, l = 0.0, f = 0.0;
      for (std::size_t i = lo; i < cursor[s]; ++i) {
        r += eps[i].total_return;
        l += eps[i].length;
        f += eps[i].fallback_rate;
      }
      const auto n = static_cast<double>(cursor[s] - lo);
      rets.push_back(r / n);
      lens.push_back(l / n);
      fbs.push_back(f / n);
    }
    if (!all) continue;
    CurvePoint p;
    p.step = g;
    std::tie(p.mean_return, p.std_return) = mean_std(rets);
    std::tie(p.mean_length, p.std_length) = mean_std(lens);
    p.fallback_rate = mean_std(fbs).first;
    out.push_back(p);
  }
  return out;
}

std::vector<double> window_lengths(const Variant& v, std::uint64_t lo, std::uint64_t hi) {
  std::vector<double> out;
  for (const auto& s : v.seeds) {
    double sum = 0.0;
    int n = 0;
    for (const auto& e : s.episodes) {
      if (e.step > lo && e.step <= hi) {
        sum += e.length;
        ++n;
      }
    }
    out.push_back(n > 0 ? sum / n : std::nan(""));
  }
  return out;
}

MaxReturn max_average_return(const Variant& v) {
  MaxReturn best;
  if (v.seeds.empty()) return best;
  std::map<std::uint64_t, std::vector<double>> by_step;
  for (const auto& s : v.seeds)
    for (const auto& e : s.evals) by_step[e.step].push_back(e.mean_return);
  for (const auto& [step, vals] : by_step) {
    if (vals.size() != v.seeds.size()) continue;
    const double m = mean_std(vals).first;
    if (!best.available || m > best.value) {
      best = {true, m, step};
    }
  }
  return best;
}

std::optional<std::uint64_t> steps_to_threshold(const std::vector<CurvePoint>& curve, double threshold) {
  for (const auto& p : curve)
    if (p.mean_return >= threshold) return p.step;
  return std::nullopt;
}

ReportResult cmd_report(const fs::path& dir, std::optional<int> window, std::ostream* log) {
  std::vector<Variant> variants;
  if (fs::exists(dir / "sweep.json")) {
    const json sweep = json::parse(read_text(dir / "sweep.json"));
    for (const auto& name : sweep.at("variants")) {
      const std::string n = name.get<std::string>();
      variants.push_back(load_variant(dir / n, n));
    }
  } else if (fs::exists(dir / "config.ini")) {
    variants.push_back(load_variant(dir, dir.filename().string()));
  } else {
    throw UsageError("report: " + dir.string() + " is neither a run nor a sweep directory");
  }
  if (variants.empty()) throw UsageError("report: no variants found in " + dir.string());

  const RunConfig& base = variants.front().config;
  const int w = window.value_or(base.report.window);
  if (w < 1) throw UsageError("report: window must be >= 1");
  const int grid = base.report.grid;
  const double threshold = base.report.threshold_return;

  ReportResult result;
  std::ostringstream curves, lengths, maxret, fallback, eff, summary;
  curves << "variant,step,mean_return,std_return,mean_length,std_length,fallback_rate,window\n";
  lengths << "variant,window_lo,window_hi,mean_length,std_length,seed_values\n";
  maxret << "variant,max_average_return,step\n";
  fallback << "variant,step,fallback_rate\n";
  eff << "variant,threshold_return,steps_to_threshold,ratio_vs_first\n";
  summary << "trailing window: " << w << " episodes\n";
  summary << "curve grid: " << grid << " steps\n";
  summary << "threshold return: " << num(threshold) << "\n\n";

  std::optional<std::uint64_t> first_steps;
  for (std::size_t vi = 0; vi < variants.size(); ++vi) {
    const Variant& v = variants[vi];
    result.variants.push_back(v.name);
    for (const auto& s : v.seeds) {
      if (!s.complete) {
        result.warnings.push_back("partial report: seed " + std::to_string(s.seed) + " of " + v.name + " is incomplete");
      }
    }
    const auto curve = learning_curve(v, w, grid, v.config.total_steps);
    for (const auto& p : curve) {
      curves << v.name << ',' << p.step << ',' << num(p.mean_return) << ',' << num(p.std_return) << ','
             << num(p.mean_length) << ',' << num(p.std_length) << ',' << num(p.fallback_rate) << ',' << w << '\n';
      fallback << v.name << ',' << p.step << ',' << num(p.fallback_rate) << '\n';
    }
    summary << "[" << v.name << "] seeds=" << v.seeds.size() << "\n";
    for (const auto& [lo, hi] : length_windows(v.config)) {
      const auto vals = window_lengths(v, lo, hi);
      const auto [m, sd] = mean_std(vals);
      std::string joined;
      for (std::size_t i = 0; i < vals.size(); ++i) joined += (i ? ";" : "") + num(vals[i]);
      lengths << v.name << ',' << lo << ',' << hi << ',' << num(m) << ',' << num(sd) << ',' << joined << '\n';
      summary << "  mean episode length in (" << lo << ", " << hi << "]: " << num(m) << " +- " << num(sd) << "\n";
    }
    const MaxReturn mr = max_average_return(v);
    maxret << v.name << ',' << (mr.available ? num(mr.value) : "") << ',' << (mr.available ? std::to_string(mr.step) : "")
           << '\n';
    summary << "  max average eval return: " << (mr.available ? num(mr.value) + " at step " + std::to_string(mr.step) : "n/a")
            << "\n";
    const auto st = steps_to_threshold(curve, threshold);
    result.steps_to_threshold.push_back(st);
    if (vi == 0) first_steps = st;
    std::string ratio;
    if (st && first_steps) ratio = num(static_cast<double>(*first_steps) / static_cast<double>(*st));
    eff << v.name << ',' << num(threshold) << ',' << (st ? std::to_string(*st) : "") << ',' << ratio << '\n';
    summary << "  steps to threshold: " << (st ? std::to_string(*st) : "not reached") << "\n";
  }
  for (const auto& wmsg : result.warnings) summary << "warning: " << wmsg << "\n";

  write_text(dir / "curves.csv", curves.str());
  write_text(dir / "episode_length.csv", lengths.str());
  write_text(dir / "max_return.csv", maxret.str());
  write_text(dir / "fallback.csv", fallback.str());
  write_text(dir / "efficiency.csv", eff.str());
  write_text(dir / "summary.txt", summary.str());
  result.summary = summary.str();
  if (log)
    for (const auto& wmsg : result.warnings) *log << "warning: " << wmsg << '\n';
  return result;
}

}  // namespace fema::harness
