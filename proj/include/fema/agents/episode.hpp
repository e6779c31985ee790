#pragma once

#include "fema/types.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>

namespace fema::agents {

/// Per-episode metrics shared by both learners.
struct EpisodeSummary {
  std::uint64_t id = 0;
  std::uint64_t step = 0;  // cumulative environment steps when the record was emitted
  double total_return = 0.0;
  int length = 0;
  EndTag end = EndTag::none;
  double fallback_rate = 1.0;
  bool staged = false;           // a failure event was staged from this episode
  std::size_t memory_records = 0;  // published records after this episode's bookkeeping
  std::size_t memory_updates = 0;
};

/// Averaged learner losses over a logging interval.
struct LossSummary {
  std::uint64_t step = 0;
  std::size_t updates = 0;
  std::map<std::string, double> values;
};

using EpisodeSink = std::function<void(const EpisodeSummary&)>;
using LossSink = std::function<void(const LossSummary&)>;

}  // namespace fema::agents
