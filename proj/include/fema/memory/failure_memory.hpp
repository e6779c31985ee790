#pragma once

#include "fema/embedding/embedding_stack.hpp"
#include "fema/memory/fema_config.hpp"
#include "fema/types.hpp"

#include <cstdint>
#include <deque>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <vector>

namespace fema::memory {

/// The last min(K, T) transitions of a hazard-terminated episode together with
/// their discounted returns to termination.
struct FailureEvent {
  std::vector<Transition> steps;
  Vector returns;  // returns[t] = sum_{n >= t} gamma^(n - t) r_n over the stored suffix
  std::uint64_t episode_id = 0;
  std::uint64_t capture_step = 0;
};

/// Returns-to-go of a reward sequence ending at termination, computed by the
/// backward recursion H_{T-1} = r_{T-1}, H_t = r_t + gamma * H_{t+1}.
Vector monte_carlo_returns(std::span<const double> rewards, double gamma);

/// Captures a failure event when the episode ended in a hazard; time-limit
/// and unfinished episodes yield nullopt. Throws UsageError on an empty
/// episode or a termination tag before the final transition.
std::optional<FailureEvent> capture_failure(std::span<const Transition> episode, const FemaConfig& cfg,
                                            std::uint64_t episode_id = 0,
                                            std::uint64_t capture_step = 0);

/// One stored (z_s, a, phi, H) tuple plus bookkeeping.
struct MemoryRecord {
  Vector z_s;
  Vector a;
  Vector phi;
  double H = 0.0;
  std::uint64_t event_id = 0;
  std::uint32_t step = 0;
  std::uint64_t version = 0;
};

/// An immutable published set of records, all encoded by one stack version.
/// Records are kept column-wise in insertion order (event order, then step).
struct Generation {
  std::uint64_t number = 0;   // publication counter
  std::uint64_t version = 0;  // embedding-stack version that produced the embeddings
  Matrix z_s;                 // d_z   x n
  Matrix actions;             // d_a   x n
  Matrix phi;                 // d_phi x n
  Vector H;                   // n
  std::vector<std::uint64_t> event_ids;
  std::vector<std::uint32_t> steps;
  embedding::StackSnapshot stack;  // encoder used; null after loading from disk

  std::size_t size() const { return static_cast<std::size_t>(H.size()); }
  MemoryRecord record(std::size_t i) const;
};

enum class RetrievalStatus { ok, cold };

struct Retrieval {
  RetrievalStatus status = RetrievalStatus::cold;
  std::shared_ptr<const Generation> generation;
  std::vector<std::size_t> ids;  // column indices into generation, ascending H, ties by index

  bool empty() const { return ids.empty(); }
};

/// Epsilon-ball retrieval over one generation: records with
/// ||z_s - query||_2 <= epsilon, the `top_o` lowest-H among them, ordered by
/// (H, insertion index). Exact linear scan.
std::vector<std::size_t> retrieve_from(const Generation& gen, const Vector& z_query, double epsilon,
                                       int top_o);

enum class UpdateStatus { ok, noop };

struct UpdateReport {
  UpdateStatus status = UpdateStatus::noop;
  embedding::TrainReport training;
  std::size_t events = 0;
  std::size_t records = 0;
  std::size_t evicted = 0;
  std::uint64_t version = 0;
};

/// Failure episodic memory.
///
/// Events are staged into a pending queue (thread-safe, FIFO-bounded by the
/// capacity) and only become searchable at `update`, which trains the
/// embedding stack on every stored event, re-encodes all of them with the
/// new parameters and atomically publishes the result as a new generation.
/// Readers always see one complete generation.
class FailureMemory {
 public:
  FailureMemory(const embedding::EmbeddingDims& dims, const FemaConfig& cfg);

  FailureMemory(const FailureMemory&) = delete;
  FailureMemory& operator=(const FailureMemory&) = delete;
  FailureMemory(FailureMemory&&) = delete;

  const FemaConfig& config() const { return cfg_; }
  const embedding::EmbeddingDims& dims() const { return dims_; }

  /// Appends to the pending queue; returns the pending count.
  std::size_t stage(FailureEvent event);
  std::size_t pending_count() const;
  bool update_due() const { return pending_count() >= static_cast<std::size_t>(cfg_.update_every); }

  /// Drains pending events into the store, evicts oldest events beyond the
  /// capacity, trains `stack` on all stored events, re-encodes and publishes.
  UpdateReport update(embedding::EmbeddingStack& stack, numeric::Rng& rng);

  Retrieval retrieve(const Vector& z_query, double epsilon, int top_o) const;
  Retrieval retrieve(const Vector& z_query) const { return retrieve(z_query, cfg_.epsilon, cfg_.top_o); }

  std::shared_ptr<const Generation> published() const;
  std::size_t stored_event_count() const;
  std::vector<FailureEvent> stored_events() const;
  std::vector<FailureEvent> pending_events() const;
  std::uint64_t config_hash() const { return config_hash_; }

  /// Binary snapshot: header, event tables (stored then pending), record table.
  void snapshot(const std::filesystem::path& path) const;

  /// Loads a snapshot. Refuses (FormatError) on bad magic, unsupported
  /// version or dimensions that differ from `dims`.
  static std::unique_ptr<FailureMemory> load(const std::filesystem::path& path,
                                             const embedding::EmbeddingDims& dims,
                                             const FemaConfig& cfg);

 private:
  embedding::EmbeddingDims dims_;
  FemaConfig cfg_;
  std::uint64_t config_hash_ = 0;

  mutable std::mutex pending_mutex_;
  std::deque<FailureEvent> pending_;

  mutable std::mutex store_mutex_;  // held by the single writer during update
  std::deque<FailureEvent> events_;

  mutable std::mutex publish_mutex_;
  std::shared_ptr<const Generation> published_;
  std::uint64_t generation_counter_ = 0;
};

}  // namespace fema::memory
