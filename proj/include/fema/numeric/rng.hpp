#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace fema::numeric {

/// Seeded pseudo-random stream. Every stochastic component owns one; streams
/// for different roles are derived with `Rng::derive` so that consuming draws
/// in one role never shifts another.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  /// Independent stream keyed on (seed, stream id).
  static Rng derive(std::uint64_t seed, std::uint64_t stream);

  double uniform();                    // [0, 1)
  double uniform(double lo, double hi);
  double normal();                     // N(0, 1)
  std::size_t below(std::size_t n);    // uniform integer in [0, n)
  std::uint64_t next_u64();

  /// Textual engine state, suitable for checkpoints.
  std::string state() const;
  void restore(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fema::numeric
