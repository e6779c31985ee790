#include "fema/selection/selection.hpp"

#include "fema/error.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace fema::selection {

Candidates sample_candidates(const StochasticPolicy& policy, const Vector& s, int n, numeric::Rng& rng) {
  if (n < 1) throw UsageError("sample_candidates: N must be >= 1");
  const GaussianParams dist = policy.distribution(s);
  if (dist.std.size() != dist.mean.size()) throw PolicyError("sample_candidates: mean/std width mismatch");
  for (Eigen::Index k = 0; k < dist.std.size(); ++k) {
    if (!std::isfinite(dist.std[k]) || dist.std[k] < 0.0)
      throw PolicyError("sample_candidates: invalid standard deviation " + std::to_string(dist.std[k]));
  }
  const Eigen::Index d = dist.mean.size();
  Candidates c;
  c.raw.resize(d, n);
  for (int i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) c.raw(k, i) = dist.mean[k] + dist.std[k] * rng.normal();
  }
  c.actions.resize(d, n);
  for (int i = 0; i < n; ++i) c.actions.col(i) = policy.squash(c.raw.col(i));
  return c;
}

double aggregate_distance(const Vector& phi, const Matrix& record_phi, std::span<const std::size_t> ids,
                          memory::DistanceAggregator agg) {
  if (ids.empty()) throw UsageError("aggregate_distance: no retrieved records");
  double sum = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t id : ids) {
    const double dist = (phi - record_phi.col(static_cast<Eigen::Index>(id))).norm();
    sum += dist;
    best = std::min(best, dist);
  }
  switch (agg) {
    case memory::DistanceAggregator::mean:
      return sum / static_cast<double>(ids.size());
    case memory::DistanceAggregator::min:
      return best;
    case memory::DistanceAggregator::sum:
      return sum;
  }
  return sum;
}

std::vector<ScoredCandidate> score_candidates(const Vector& s, const Matrix& actions,
                                              const memory::Generation& gen,
                                              std::span<const std::size_t> ids,
                                              const embedding::EmbeddingStack& stack, double lambda_risk,
                                              memory::DistanceAggregator agg) {
  if (ids.empty()) throw UsageError("score_candidates: no retrieved records");
  if (gen.version != stack.version()) {
    throw CoherenceError("score_candidates: records encoded by stack version " + std::to_string(gen.version) +
                         ", scoring with version " + std::to_string(stack.version()));
  }
  for (std::size_t id : ids) {
    if (id >= gen.size()) throw UsageError("score_candidates: record id out of range");
  }
  const Eigen::Index n = actions.cols();
  const Vector z_s = stack.encode_state(s);
  const Matrix z_states = z_s.replicate(1, n);
  const Matrix phi = stack.joint_embed(z_states, stack.encode_actions(actions));
  const Vector rho = stack.risk(phi);

  std::vector<ScoredCandidate> out(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& c = out[static_cast<std::size_t>(i)];
    c.action = actions.col(i);
    c.phi = phi.col(i);
    c.distance = aggregate_distance(c.phi, gen.phi, ids, agg);
    c.risk = rho[i];
    c.score = risk_aware_score(c.distance, c.risk, lambda_risk);
  }
  return out;
}

std::size_t argmax_score(std::span<const double> scores) {
  if (scores.empty()) throw UsageError("argmax_score: no scores");
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return best;
}

Selection select(const Vector& s, const StochasticPolicy& policy, const memory::FailureMemory& memory,
                 const embedding::StackSnapshot& stack, const memory::FemaConfig& cfg, numeric::Rng& rng) {
  return select(s, s, policy, memory, stack, cfg, rng);
}

Selection select(const Vector& s, const Vector& s_embed, const StochasticPolicy& policy,
                 const memory::FailureMemory& memory, const embedding::StackSnapshot& stack,
                 const memory::FemaConfig& cfg, numeric::Rng& rng) {
  Selection out;
  out.trace.state = s_embed;
  out.trace.aggregator = cfg.aggregator;
  out.trace.lambda_risk = cfg.lambda_risk;

  memory::Retrieval found;
  if (memory.published()) {
    if (!stack) throw UsageError("select: published memory but no embedding snapshot");
    found = memory.retrieve(stack->encode_state(s_embed), cfg.epsilon, cfg.top_o);
    out.trace.generation = found.generation->number;
    out.trace.version = found.generation->version;
  }

  if (found.empty()) {
    const Candidates c = sample_candidates(policy, s, 1, rng);
    out.raw = c.raw.col(0);
    out.action = c.actions.col(0);
    out.trace.fallback = true;
    out.trace.chosen = 0;
    return out;
  }

  const Candidates c = sample_candidates(policy, s, cfg.candidates, rng);
  Matrix env_actions(c.actions.rows(), c.actions.cols());
  for (Eigen::Index i = 0; i < c.actions.cols(); ++i) env_actions.col(i) = policy.to_env(c.actions.col(i));
  out.trace.retrieved = found.ids;
  out.trace.candidates =
      score_candidates(s_embed, env_actions, *found.generation, found.ids, *stack, cfg.lambda_risk, cfg.aggregator);
  std::vector<double> scores;
  scores.reserve(out.trace.candidates.size());
  for (const auto& sc : out.trace.candidates) scores.push_back(sc.score);
  out.trace.chosen = argmax_score(scores);
  out.trace.fallback = false;
  out.raw = c.raw.col(static_cast<Eigen::Index>(out.trace.chosen));
  out.action = c.actions.col(static_cast<Eigen::Index>(out.trace.chosen));
  return out;
}

namespace {

nlohmann::json vec_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

}  // namespace

nlohmann::json to_json(const SelectionTrace& trace) {
  nlohmann::json cands = nlohmann::json::array();
  for (const auto& c : trace.candidates) {
    cands.push_back({{"action", vec_json(c.action)},
                     {"distance", c.distance},
                     {"risk", c.risk},
                     {"score", c.score}});
  }
  return {{"type", "selection"},
          {"state", vec_json(trace.state)},
          {"generation", trace.generation},
          {"version", trace.version},
          {"retrieved", trace.retrieved},
          {"candidates", std::move(cands)},
          {"chosen", trace.chosen},
          {"fallback", trace.fallback},
          {"aggregator", std::string(memory::to_string(trace.aggregator))},
          {"lambda_risk", trace.lambda_risk},
          {"log_prob", trace.log_prob}};
}

}  // namespace fema::selection
