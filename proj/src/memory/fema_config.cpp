#include "fema/memory/fema_config.hpp"

#include "fema/error.hpp"

#include <cmath>
#include <cstdio>

namespace fema::memory {

std::string_view to_string(DistanceAggregator a) {
  switch (a) {
    case DistanceAggregator::mean:
      return "mean";
    case DistanceAggregator::min:
      return "min";
    case DistanceAggregator::sum:
      return "sum";
  }
  return "?";
}

std::optional<DistanceAggregator> parse_aggregator(std::string_view s) {
  if (s == "mean") return DistanceAggregator::mean;
  if (s == "min") return DistanceAggregator::min;
  if (s == "sum") return DistanceAggregator::sum;
  return std::nullopt;
}

void FemaConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("fema config: " + msg); };
  if (suffix_len < 1) fail("suffix_len (K) must be >= 1");
  if (update_every < 1) fail("update_every (M) must be >= 1");
  if (candidates < 1) fail("candidates (N) must be >= 1");
  if (std::isnan(epsilon) || epsilon < 0.0) fail("epsilon must be >= 0");
  if (top_o < 1) fail("top_o (O) must be >= 1");
  if (!std::isfinite(lambda_risk)) fail("lambda_risk must be finite");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1]");
  if (capacity < update_every) fail("capacity must be >= update_every (M)");
}

std::uint64_t FemaConfig::hash() const {
  char buf[512];
  std::snprintf(buf, sizeof buf, "enabled=%d;K=%d;M=%d;N=%d;eps=%.17g;O=%d;lambda=%.17g;gamma=%.17g;cap=%d;agg=%d",
                enabled ? 1 : 0, suffix_len, update_every, candidates, epsilon, top_o, lambda_risk, gamma,
                capacity, static_cast<int>(aggregator));
  std::uint64_t h = 1469598103934665603ull;
  for (const char* p = buf; *p != '\0'; ++p) {
    h ^= static_cast<unsigned char>(*p);
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace fema::memory
