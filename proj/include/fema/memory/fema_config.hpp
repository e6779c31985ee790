#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

namespace fema::memory {

/// How the distances from one candidate embedding to the retrieved hazard
/// embeddings are combined into D_i.
enum class DistanceAggregator : std::uint8_t { mean = 0, min = 1, sum = 2 };

std::string_view to_string(DistanceAggregator a);
std::optional<DistanceAggregator> parse_aggregator(std::string_view s);

/// Failure-memory and action-selection hyperparameters.
struct FemaConfig {
  bool enabled = true;
  int suffix_len = 16;        // K: transitions kept from the end of a failure episode
  int update_every = 100;     // M: staged events per periodic update
  int candidates = 10;        // N: policy samples scored per decision
  double epsilon = 0.05;      // l2 retrieval radius in state-embedding space
  int top_o = 5;              // O: lowest-return matches kept
  double lambda_risk = 0.5;   // weight of the risk term in S = D - lambda * rho
  double gamma = 0.99;        // discount for the Monte Carlo returns
  int capacity = 2000;        // max stored events
  DistanceAggregator aggregator = DistanceAggregator::mean;

  /// Throws ConfigError on any out-of-range field.
  void validate() const;

  /// FNV-1a hash of the canonical field listing.
  std::uint64_t hash() const;

  friend bool operator==(const FemaConfig&, const FemaConfig&) = default;
};

inline constexpr double kUnboundedEpsilon = std::numeric_limits<double>::infinity();

}  // namespace fema::memory
