#include "fema/memory/failure_memory.hpp"

#include "fema/error.hpp"
#include "fema/numeric/binary_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

namespace fema::memory {

Vector monte_carlo_returns(std::span<const double> rewards, double gamma) {
  Vector H(static_cast<Eigen::Index>(rewards.size()));
  double acc = 0.0;
  for (std::size_t t = rewards.size(); t-- > 0;) {
    acc = (t + 1 == rewards.size()) ? rewards[t] : rewards[t] + gamma * acc;
    H[static_cast<Eigen::Index>(t)] = acc;
  }
  return H;
}

std::optional<FailureEvent> capture_failure(std::span<const Transition> episode, const FemaConfig& cfg,
                                            std::uint64_t episode_id, std::uint64_t capture_step) {
  if (episode.empty()) throw UsageError("capture_failure: empty episode");
  for (std::size_t i = 0; i + 1 < episode.size(); ++i) {
    if (episode[i].end != EndTag::none) {
      throw UsageError("capture_failure: termination tag on non-final transition " + std::to_string(i));
    }
  }
  if (episode.back().end != EndTag::hazard) return std::nullopt;

  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(cfg.suffix_len), episode.size());
  const auto suffix = episode.subspan(episode.size() - keep);
  FailureEvent ev;
  ev.steps.assign(suffix.begin(), suffix.end());
  std::vector<double> rewards;
  rewards.reserve(keep);
  for (const auto& t : suffix) rewards.push_back(t.r);
  ev.returns = monte_carlo_returns(rewards, cfg.gamma);
  ev.episode_id = episode_id;
  ev.capture_step = capture_step;
  return ev;
}

MemoryRecord Generation::record(std::size_t i) const {
  if (i >= size()) throw UsageError("Generation::record: index out of range");
  const auto c = static_cast<Eigen::Index>(i);
  return MemoryRecord{z_s.col(c), actions.col(c), phi.col(c), H[c], event_ids[i], steps[i], version};
}

std::vector<std::size_t> retrieve_from(const Generation& gen, const Vector& z_query, double epsilon,
                                       int top_o) {
  if (z_query.size() != gen.z_s.rows()) throw ShapeError("retrieve: query width differs from d_z");
  if (top_o < 1) throw UsageError("retrieve: top_o must be >= 1");
  const Eigen::Index d = gen.z_s.rows();
  const Eigen::Index n = gen.z_s.cols();
  const double* z = gen.z_s.data();
  const double* q = z_query.data();

  std::vector<std::size_t> hits;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* col = z + i * d;
    double acc = 0.0;
    for (Eigen::Index k = 0; k < d; ++k) {
      const double diff = col[k] - q[k];
      acc += diff * diff;
    }
    if (std::sqrt(acc) <= epsilon) hits.push_back(static_cast<std::size_t>(i));
  }
  const auto by_return = [&gen](std::size_t a, std::size_t b) {
    const double ha = gen.H[static_cast<Eigen::Index>(a)];
    const double hb = gen.H[static_cast<Eigen::Index>(b)];
    return ha < hb || (ha == hb && a < b);
  };
  const std::size_t keep = std::min(hits.size(), static_cast<std::size_t>(top_o));
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(keep), hits.end(), by_return);
  hits.resize(keep);
  return hits;
}

// ---------------------------------------------------------------------------

FailureMemory::FailureMemory(const embedding::EmbeddingDims& dims, const FemaConfig& cfg)
    : dims_(dims), cfg_(cfg), config_hash_(cfg.hash()) {
  cfg_.validate();
  if (dims.state < 1 || dims.action < 1 || dims.z_state < 1 || dims.phi < 1)
    throw ConfigError("FailureMemory: dimensions must be >= 1");
}

std::size_t FailureMemory::stage(FailureEvent event) {
  if (event.steps.empty() || static_cast<std::size_t>(event.returns.size()) != event.steps.size())
    throw UsageError("stage: malformed failure event");
  for (const auto& t : event.steps) {
    numeric::require_width(t.s, dims_.state, "stage state");
    numeric::require_width(t.a, dims_.action, "stage action");
  }
  std::lock_guard lock(pending_mutex_);
  pending_.push_back(std::move(event));
  while (pending_.size() > static_cast<std::size_t>(cfg_.capacity)) pending_.pop_front();
  return pending_.size();
}

std::size_t FailureMemory::pending_count() const {
  std::lock_guard lock(pending_mutex_);
  return pending_.size();
}

UpdateReport FailureMemory::update(embedding::EmbeddingStack& stack, numeric::Rng& rng) {
  if (!(stack.dims() == dims_)) throw ShapeError("FailureMemory::update: stack dimensions differ");
  std::lock_guard store_lock(store_mutex_);
  std::deque<FailureEvent> incoming;
  {
    std::lock_guard lock(pending_mutex_);
    incoming.swap(pending_);
  }
  UpdateReport report;
  if (incoming.empty() && events_.empty()) return report;

  std::stable_sort(incoming.begin(), incoming.end(), [](const FailureEvent& a, const FailureEvent& b) {
    return a.capture_step < b.capture_step;
  });
  for (auto& ev : incoming) events_.push_back(std::move(ev));
  while (events_.size() > static_cast<std::size_t>(cfg_.capacity)) {
    events_.pop_front();
    ++report.evicted;
  }

  Eigen::Index n = 0;
  for (const auto& ev : events_) n += static_cast<Eigen::Index>(ev.steps.size());
  embedding::RiskBatch batch;
  batch.states.resize(dims_.state, n);
  batch.actions.resize(dims_.action, n);
  batch.returns.resize(n);
  auto gen = std::make_shared<Generation>();
  gen->event_ids.reserve(static_cast<std::size_t>(n));
  gen->steps.reserve(static_cast<std::size_t>(n));
  Eigen::Index c = 0;
  for (const auto& ev : events_) {
    for (std::size_t t = 0; t < ev.steps.size(); ++t, ++c) {
      batch.states.col(c) = ev.steps[t].s;
      batch.actions.col(c) = ev.steps[t].a;
      batch.returns[c] = ev.returns[static_cast<Eigen::Index>(t)];
      gen->event_ids.push_back(ev.episode_id);
      gen->steps.push_back(static_cast<std::uint32_t>(t));
    }
  }

  report.training = stack.train_risk(batch, rng);
  auto snap = stack.snapshot();
  gen->z_s = snap->encode_states(batch.states);
  gen->actions = batch.actions;
  gen->phi = snap->joint_embed(gen->z_s, snap->encode_actions(batch.actions));
  gen->H = batch.returns;
  gen->version = snap->version();
  gen->stack = std::move(snap);
  numeric::require_finite(gen->z_s, "memory re-encoding");
  numeric::require_finite(gen->phi, "memory re-encoding");

  {
    std::lock_guard lock(publish_mutex_);
    gen->number = ++generation_counter_;
    published_ = std::move(gen);
  }
  report.status = UpdateStatus::ok;
  report.events = events_.size();
  report.records = static_cast<std::size_t>(n);
  report.version = stack.version();
  return report;
}

Retrieval FailureMemory::retrieve(const Vector& z_query, double epsilon, int top_o) const {
  Retrieval out;
  out.generation = published();
  if (!out.generation) {
    out.status = RetrievalStatus::cold;
    return out;
  }
  out.status = RetrievalStatus::ok;
  out.ids = retrieve_from(*out.generation, z_query, epsilon, top_o);
  return out;
}

std::shared_ptr<const Generation> FailureMemory::published() const {
  std::lock_guard lock(publish_mutex_);
  return published_;
}

std::size_t FailureMemory::stored_event_count() const {
  std::lock_guard lock(store_mutex_);
  return events_.size();
}

std::vector<FailureEvent> FailureMemory::stored_events() const {
  std::lock_guard lock(store_mutex_);
  return {events_.begin(), events_.end()};
}

std::vector<FailureEvent> FailureMemory::pending_events() const {
  std::lock_guard lock(pending_mutex_);
  return {pending_.begin(), pending_.end()};
}

// ---------------------------------------------------------------------------
// Snapshot layout (little-endian):
//   "FEMA" u32 format_version
//   u32 d_s u32 d_a u32 d_z u32 d_phi f64 gamma u64 config_hash
//   u64 stored_count u64 pending_count
//   per event: u64 episode_id u64 capture_step u32 length
//              per step: f64[d_s] s f64[d_a] a f64 r f64[d_s] s_next u8 end f64 H
//   u8 published
//   if published: u64 generation u64 version u64 n
//                 per record: u64 event_id u32 step f64[d_z] z_s f64[d_a] a f64[d_phi] phi f64 H
//   u64 generation_counter

namespace {

constexpr std::array<char, 4> kMemoryMagic{'F', 'E', 'M', 'A'};
constexpr std::uint32_t kMemoryVersion = 1;

void write_values(numeric::BinaryWriter& w, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) w.f64(v[i]);
}

Vector read_values(numeric::BinaryReader& r, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = r.f64();
  return v;
}

void write_event(numeric::BinaryWriter& w, const FailureEvent& ev) {
  w.u64(ev.episode_id);
  w.u64(ev.capture_step);
  w.u32(static_cast<std::uint32_t>(ev.steps.size()));
  for (std::size_t t = 0; t < ev.steps.size(); ++t) {
    const auto& tr = ev.steps[t];
    write_values(w, tr.s);
    write_values(w, tr.a);
    w.f64(tr.r);
    write_values(w, tr.s_next);
    w.u8(static_cast<std::uint8_t>(tr.end));
    w.f64(ev.returns[static_cast<Eigen::Index>(t)]);
  }
}

FailureEvent read_event(numeric::BinaryReader& r, const embedding::EmbeddingDims& d) {
  FailureEvent ev;
  ev.episode_id = r.u64();
  ev.capture_step = r.u64();
  const auto len = r.u32();
  if (len == 0 || len > (1u << 24)) throw FormatError("memory snapshot: implausible event length");
  ev.returns.resize(len);
  ev.steps.resize(len);
  for (std::uint32_t t = 0; t < len; ++t) {
    auto& tr = ev.steps[t];
    tr.s = read_values(r, d.state);
    tr.a = read_values(r, d.action);
    tr.r = r.f64();
    tr.s_next = read_values(r, d.state);
    const auto tag = r.u8();
    if (tag > static_cast<std::uint8_t>(EndTag::time_limit)) throw FormatError("memory snapshot: bad end tag");
    tr.end = static_cast<EndTag>(tag);
    ev.returns[t] = r.f64();
  }
  return ev;
}

}  // namespace

void FailureMemory::snapshot(const std::filesystem::path& path) const {
  std::lock_guard store_lock(store_mutex_);
  std::deque<FailureEvent> pending;
  {
    std::lock_guard lock(pending_mutex_);
    pending = pending_;
  }
  const auto gen = published();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open " + path.string() + " for writing");
  numeric::BinaryWriter w(out);
  w.magic(kMemoryMagic);
  w.u32(kMemoryVersion);
  w.u32(static_cast<std::uint32_t>(dims_.state));
  w.u32(static_cast<std::uint32_t>(dims_.action));
  w.u32(static_cast<std::uint32_t>(dims_.z_state));
  w.u32(static_cast<std::uint32_t>(dims_.phi));
  w.f64(cfg_.gamma);
  w.u64(config_hash_);
  w.u64(events_.size());
  w.u64(pending.size());
  for (const auto& ev : events_) write_event(w, ev);
  for (const auto& ev : pending) write_event(w, ev);
  w.u8(gen ? 1 : 0);
  if (gen) {
    w.u64(gen->number);
    w.u64(gen->version);
    w.u64(gen->size());
    for (std::size_t i = 0; i < gen->size(); ++i) {
      const auto c = static_cast<Eigen::Index>(i);
      w.u64(gen->event_ids[i]);
      w.u32(gen->steps[i]);
      write_values(w, gen->z_s.col(c));
      write_values(w, gen->actions.col(c));
      write_values(w, gen->phi.col(c));
      w.f64(gen->H[c]);
    }
  }
  w.u64(generation_counter_);
  out.flush();
  if (!out) throw FormatError("failed writing " + path.string());
}

std::unique_ptr<FailureMemory> FailureMemory::load(const std::filesystem::path& path,
                                                   const embedding::EmbeddingDims& dims,
                                                   const FemaConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  numeric::BinaryReader r(in);
  r.expect_magic(kMemoryMagic, "memory snapshot");
  const auto version = r.u32();
  if (version != kMemoryVersion)
    throw FormatError("memory snapshot: unsupported format version " + std::to_string(version));
  embedding::EmbeddingDims d = dims;
  const auto d_s = r.u32();
  const auto d_a = r.u32();
  const auto d_z = r.u32();
  const auto d_phi = r.u32();
  if (static_cast<int>(d_s) != dims.state || static_cast<int>(d_a) != dims.action ||
      static_cast<int>(d_z) != dims.z_state || static_cast<int>(d_phi) != dims.phi) {
    throw FormatError("memory snapshot: dimension mismatch (file d_s=" + std::to_string(d_s) +
                      " d_a=" + std::to_string(d_a) + " d_z=" + std::to_string(d_z) +
                      " d_phi=" + std::to_string(d_phi) + ")");
  }
  const double gamma = r.f64();
  const auto hash = r.u64();
  const auto n_stored = r.u64();
  const auto n_pending = r.u64();
  if (n_stored > (1u << 24) || n_pending > (1u << 24)) throw FormatError("memory snapshot: implausible event count");

  // Everything is read into locals first so a failure leaves no partial object.
  std::deque<FailureEvent> stored, pending;
  for (std::uint64_t i = 0; i < n_stored; ++i) stored.push_back(read_event(r, d));
  for (std::uint64_t i = 0; i < n_pending; ++i) pending.push_back(read_event(r, d));
  std::shared_ptr<Generation> gen;
  if (r.u8() != 0) {
    gen = std::make_shared<Generation>();
    gen->number = r.u64();
    gen->version = r.u64();
    const auto n = r.u64();
    if (n > (1u << 26)) throw FormatError("memory snapshot: implausible record count");
    const auto cols = static_cast<Eigen::Index>(n);
    gen->z_s.resize(d.z_state, cols);
    gen->actions.resize(d.action, cols);
    gen->phi.resize(d.phi, cols);
    gen->H.resize(cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      gen->event_ids.push_back(r.u64());
      gen->steps.push_back(r.u32());
      gen->z_s.col(c) = read_values(r, d.z_state);
      gen->actions.col(c) = read_values(r, d.action);
      gen->phi.col(c) = read_values(r, d.phi);
      gen->H[c] = r.f64();
    }
  }
  const auto counter = r.u64();

  FemaConfig loaded_cfg = cfg;
  loaded_cfg.gamma = gamma;
  auto mem = std::make_unique<FailureMemory>(dims, loaded_cfg);
  mem->config_hash_ = hash;
  mem->events_ = std::move(stored);
  mem->pending_ = std::move(pending);
  mem->published_ = std::move(gen);
  mem->generation_counter_ = counter;
  return mem;
}

}  // namespace fema::memory
