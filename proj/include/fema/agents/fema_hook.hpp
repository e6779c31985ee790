#pragma once

#include "fema/embedding/embedding_stack.hpp"
#include "fema/memory/failure_memory.hpp"
#include "fema/selection/selection.hpp"

#include <functional>
#include <memory>
#include <optional>
#include <span>

namespace fema::agents {

/// Wires the failure memory into an agent: failure capture at episode end,
/// M-periodic memory updates, and risk-aware selection at decision time.
///
/// Memory training draws from its own stream, so enabling the hook never
/// shifts the agent's action or learner streams.
class FemaHook {
 public:
  FemaHook(const memory::FemaConfig& cfg, const embedding::EmbeddingConfig& emb, std::uint64_t seed);

  bool enabled() const { return cfg_.enabled; }
  const memory::FemaConfig& config() const { return cfg_; }

  /// States are divided by `scale` before they reach the memory and the
  /// encoder. Empty means unit scale.
  void set_state_scale(const Vector& scale);
  const Vector& state_scale() const { return scale_; }

  /// Captures a hazard-terminated episode and stages it; true when staged.
  bool on_episode_end(std::span<const Transition> episode, std::uint64_t episode_id, std::uint64_t step);

  /// Runs the periodic update when at least M events are pending.
  std::optional<memory::UpdateReport> update_if_due();
  memory::UpdateReport force_update();

  /// Risk-aware selection against the current published generation.
  selection::Selection select(const Vector& s, const selection::StochasticPolicy& policy,
                              numeric::Rng& rng) const;

  memory::FailureMemory& memory() { return *memory_; }
  const memory::FailureMemory& memory() const { return *memory_; }
  const embedding::EmbeddingStack& stack() const { return stack_; }
  embedding::EmbeddingStack& mutable_stack() { return stack_; }
  embedding::StackSnapshot snapshot() const { return snapshot_; }

  std::size_t published_records() const;
  std::size_t updates() const { return updates_; }
  const numeric::Rng& rng() const { return rng_; }

  /// Replaces the memory (e.g. after loading a snapshot).
  void reset_memory(std::unique_ptr<memory::FailureMemory> mem, embedding::EmbeddingStack stack);

 private:
  memory::FemaConfig cfg_;
  embedding::EmbeddingStack stack_;
  std::unique_ptr<memory::FailureMemory> memory_;
  embedding::StackSnapshot snapshot_;
  numeric::Rng rng_;
  std::size_t updates_ = 0;
  Vector scale_;
};

}  // namespace fema::agents
