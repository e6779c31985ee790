#include "fema/agents/replay_buffer.hpp"

#include "fema/error.hpp"

namespace fema::agents {

ReplayBuffer::ReplayBuffer(int state_dim, int action_dim, std::size_t capacity)
    : capacity_(capacity),
      states_(state_dim, static_cast<Eigen::Index>(capacity)),
      actions_(action_dim, static_cast<Eigen::Index>(capacity)),
      next_states_(state_dim, static_cast<Eigen::Index>(capacity)),
      rewards_(static_cast<Eigen::Index>(capacity)),
      terminal_(static_cast<Eigen::Index>(capacity)) {
  if (capacity == 0) throw ConfigError("ReplayBuffer: capacity must be >= 1");
}

void ReplayBuffer::add(const Transition& t) {
  numeric::require_width(t.s, states_.rows(), "replay state");
  numeric::require_width(t.a, actions_.rows(), "replay action");
  const auto c = static_cast<Eigen::Index>(head_);
  states_.col(c) = t.s;
  actions_.col(c) = t.a;
  next_states_.col(c) = t.s_next;
  rewards_[c] = t.r;
  terminal_[c] = t.end == EndTag::hazard ? 1.0 : 0.0;
  head_ = (head_ + 1) % capacity_;
  if (size_ < capacity_) ++size_;
}

ReplayBatch ReplayBuffer::sample(std::size_t n, numeric::Rng& rng) const {
  if (size_ == 0) throw UsageError("ReplayBuffer::sample on an empty buffer");
  ReplayBatch b;
  const auto m = static_cast<Eigen::Index>(n);
  b.states.resize(states_.rows(), m);
  b.actions.resize(actions_.rows(), m);
  b.next_states.resize(states_.rows(), m);
  b.rewards.resize(m);
  b.terminal.resize(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto k = static_cast<Eigen::Index>(rng.below(size_));
    b.states.col(i) = states_.col(k);
    b.actions.col(i) = actions_.col(k);
    b.next_states.col(i) = next_states_.col(k);
    b.rewards[i] = rewards_[k];
    b.terminal[i] = terminal_[k];
  }
  return b;
}

}  // namespace fema::agents
