#include "fema/agents/fema_hook.hpp"

#include "fema/error.hpp"

#include <vector>

namespace fema::agents {

FemaHook::FemaHook(const memory::FemaConfig& cfg, const embedding::EmbeddingConfig& emb, std::uint64_t seed)
    : cfg_(cfg),
      stack_(emb, numeric::Rng::derive(seed, 7).next_u64()),
      memory_(std::make_unique<memory::FailureMemory>(emb.dims, cfg)),
      rng_(numeric::Rng::derive(seed, 8)) {
  cfg_.validate();
}

void FemaHook::set_state_scale(const Vector& scale) {
  if (scale.size() > 0 && (scale.array() <= 0.0).any()) throw ConfigError("state scale entries must be positive");
  scale_ = scale;
}

bool FemaHook::on_episode_end(std::span<const Transition> episode, std::uint64_t episode_id, std::uint64_t step) {
  if (!cfg_.enabled || episode.empty()) return false;
  std::optional<memory::FailureEvent> ev;
  if (scale_.size() == 0) {
    ev = memory::capture_failure(episode, cfg_, episode_id, step);
  } else {
    std::vector<Transition> scaled(episode.begin(), episode.end());
    for (auto& t : scaled) {
      t.s = t.s.cwiseQuotient(scale_);
      t.s_next = t.s_next.cwiseQuotient(scale_);
    }
    ev = memory::capture_failure(scaled, cfg_, episode_id, step);
  }
  if (!ev) return false;
  memory_->stage(std::move(*ev));
  return true;
}

std::optional<memory::UpdateReport> FemaHook::update_if_due() {
  if (!cfg_.enabled || !memory_->update_due()) return std::nullopt;
  return force_update();
}

memory::UpdateReport FemaHook::force_update() {
  auto report = memory_->update(stack_, rng_);
  if (report.status == memory::UpdateStatus::ok) {
    snapshot_ = memory_->published()->stack;
    ++updates_;
  }
  return report;
}

selection::Selection FemaHook::select(const Vector& s, const selection::StochasticPolicy& policy,
                                      numeric::Rng& rng) const {
  if (scale_.size() == 0) return selection::select(s, policy, *memory_, snapshot_, cfg_, rng);
  return selection::select(s, s.cwiseQuotient(scale_), policy, *memory_, snapshot_, cfg_, rng);
}

std::size_t FemaHook::published_records() const {
  const auto gen = memory_->published();
  return gen ? gen->size() : 0;
}

void FemaHook::reset_memory(std::unique_ptr<memory::FailureMemory> mem, embedding::EmbeddingStack stack) {
  memory_ = std::move(mem);
  stack_ = std::move(stack);
  snapshot_ = stack_.snapshot();
}

}  // namespace fema::agents
