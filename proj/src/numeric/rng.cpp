#include "fema/numeric/rng.hpp"

#include "fema/error.hpp"

#include <sstream>

namespace fema::numeric {

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x46454d41u};
  Rng r;
  r.engine_.seed(seq);
  return r;
}

double Rng::uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

double Rng::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

// A fresh distribution per call keeps the generator state the only state.
double Rng::normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw UsageError("Rng::below: empty range");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

std::uint64_t Rng::next_u64() { return engine_(); }

std::string Rng::state() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::restore(const std::string& state) {
  std::istringstream is(state);
  std::mt19937_64 e;
  is >> e;
  if (!is) throw FormatError("Rng::restore: malformed generator state");
  engine_ = e;
}

}  // namespace fema::numeric
