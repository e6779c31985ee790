#pragma once

#include "fema/numeric/rng.hpp"
#include "fema/types.hpp"

#include <cstddef>

namespace fema::agents {

struct ReplayBatch {
  Matrix states;
  Matrix actions;
  Vector rewards;
  Matrix next_states;
  Vector terminal;  // 1 for hazard endings; time-limit endings still bootstrap
};

/// Fixed-capacity ring buffer with uniform sampling (with replacement).
class ReplayBuffer {
 public:
  ReplayBuffer(int state_dim, int action_dim, std::size_t capacity);

  void add(const Transition& t);
  std::size_t size() const { return size_; }
  std::size_t capacity() const { return capacity_; }

  ReplayBatch sample(std::size_t n, numeric::Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t size_ = 0;
  std::size_t head_ = 0;
  Matrix states_, actions_, next_states_;
  Vector rewards_, terminal_;
};

}  // namespace fema::agents
