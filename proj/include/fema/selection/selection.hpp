#pragma once

#include "fema/embedding/embedding_stack.hpp"
#include "fema/memory/failure_memory.hpp"
#include "fema/numeric/rng.hpp"

#include "json.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fema::selection {

struct GaussianParams {
  Vector mean;
  Vector std;
};

/// The part of a stochastic policy that action selection needs: the
/// state-conditional diagonal Gaussian and the agent's action conventions.
class StochasticPolicy {
 public:
  virtual ~StochasticPolicy() = default;

  virtual GaussianParams distribution(const Vector& s) const = 0;

  /// Raw Gaussian draw -> emitted action (tanh squashing for SAC-lite).
  virtual Vector squash(const Vector& u) const = 0;

  /// Emitted action -> action applied to the environment (clipping for PPO-lite).
  virtual Vector to_env(const Vector& a) const { return a; }
};

struct Candidates {
  Matrix raw;      // d_a x N Gaussian draws
  Matrix actions;  // d_a x N emitted actions

  Eigen::Index size() const { return raw.cols(); }
};

/// N independent draws u_i = mean + std * xi_i, xi_i ~ N(0, I), consuming
/// exactly N * d_a normals from `rng` (candidate-major). A zero std yields the
/// mean; a negative or non-finite std throws PolicyError.
Candidates sample_candidates(const StochasticPolicy& policy, const Vector& s, int n, numeric::Rng& rng);

struct ScoredCandidate {
  Vector action;  // environment-space action that was embedded
  Vector phi;
  double distance = 0.0;  // D_i
  double risk = 0.0;      // rho_i
  double score = 0.0;     // S_i = D_i - lambda * rho_i
};

/// S_i = D_i - lambda * rho_i. The single definition used everywhere.
inline double risk_aware_score(double distance, double risk, double lambda_risk) {
  return distance - lambda_risk * risk;
}

/// Aggregates the l2 distances from `phi` to the retrieved record embeddings.
double aggregate_distance(const Vector& phi, const Matrix& record_phi, std::span<const std::size_t> ids,
                          memory::DistanceAggregator agg);

/// Scores environment-space `actions` (d_a x N) in state `s` against the
/// retrieved records. Throws CoherenceError when the records were encoded by
/// a different stack version than `stack`, UsageError when `ids` is empty.
std::vector<ScoredCandidate> score_candidates(const Vector& s, const Matrix& actions,
                                              const memory::Generation& gen,
                                              std::span<const std::size_t> ids,
                                              const embedding::EmbeddingStack& stack, double lambda_risk,
                                              memory::DistanceAggregator agg);

/// Index of the maximum score; ties go to the lowest index.
std::size_t argmax_score(std::span<const double> scores);

struct SelectionTrace {
  Vector state;
  std::uint64_t generation = 0;
  std::uint64_t version = 0;
  std::vector<std::size_t> retrieved;
  std::vector<ScoredCandidate> candidates;
  std::size_t chosen = 0;
  bool fallback = true;
  memory::DistanceAggregator aggregator = memory::DistanceAggregator::mean;
  double lambda_risk = 0.0;
  double log_prob = 0.0;  // log pi(executed action | s), filled by the agent
};

nlohmann::json to_json(const SelectionTrace& trace);

struct Selection {
  Vector raw;     // Gaussian draw of the executed candidate
  Vector action;  // emitted action
  SelectionTrace trace;
};

/// Risk-aware action selection. Encodes s, retrieves hazardous precedents;
/// with no match (or a cold memory) returns one plain policy draw flagged as
/// fallback, otherwise draws N candidates and returns the highest-scoring.
/// `stack` may be null only while the memory is cold.
Selection select(const Vector& s, const StochasticPolicy& policy, const memory::FailureMemory& memory,
                 const embedding::StackSnapshot& stack, const memory::FemaConfig& cfg, numeric::Rng& rng);

/// As above, but the embedding side (retrieval, scoring, trace) sees
/// `s_embed` while the policy sees `s`.
Selection select(const Vector& s, const Vector& s_embed, const StochasticPolicy& policy,
                 const memory::FailureMemory& memory, const embedding::StackSnapshot& stack,
                 const memory::FemaConfig& cfg, numeric::Rng& rng);

}  // namespace fema::selection
