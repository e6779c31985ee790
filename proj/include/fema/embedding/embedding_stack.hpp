#pragma once

#include "fema/numeric/adam.hpp"
#include "fema/numeric/binary_io.hpp"
#include "fema/numeric/mlp.hpp"
#include "fema/numeric/rng.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <optional>

namespace fema::embedding {

struct EmbeddingDims {
  int state = 0;
  int action = 0;
  int z_state = 16;
  int z_action = 8;
  int phi = 32;

  friend bool operator==(const EmbeddingDims&, const EmbeddingDims&) = default;
};

struct EmbeddingConfig {
  EmbeddingDims dims;
  int hidden_width = 64;
  numeric::AdamHyper adam{};
  int epochs = 50;
  int batch_size = 64;
};

/// Lower bound on the batch standard deviation used as the divisor.
inline constexpr double kReturnNormEps = 1e-6;

/// Risk regression targets for one batch of Monte Carlo returns:
/// y_i = -(H_i - mean) / max(std, eps), population standard deviation.
/// A constant batch maps to exact zeros. Throws UsageError on an empty batch.
Vector normalize_returns(const Vector& returns, double eps = kReturnNormEps);

/// Training samples for the risk head, one column per (s, a, H) triple.
struct RiskBatch {
  Matrix states;
  Matrix actions;
  Vector returns;

  Eigen::Index size() const { return returns.size(); }
};

struct StackGrads {
  numeric::MlpGrads f, g, j, h;
};

enum class TrainStatus { ok, empty, degenerate };

struct TrainReport {
  TrainStatus status = TrainStatus::ok;
  double initial_loss = 0.0;  // mean loss over the first epoch
  double final_loss = 0.0;    // mean loss over the last epoch
  int epochs = 0;
  Eigen::Index samples = 0;
};

class EmbeddingStack;
using StackSnapshot = std::shared_ptr<const EmbeddingStack>;

/// State encoder f, action encoder g, joint embedder j and risk head h.
///
///   z_s = f(s),  z_a = g(a),  phi = j([z_s; z_a]),  rho = h(phi)
///
/// The four networks are trained together by one backward pass through
/// h(j(f(s), g(a))) against normalized negative returns. `version()` counts
/// parameter generations; it advances whenever training runs or parameters
/// are edited.
class EmbeddingStack {
 public:
  EmbeddingStack() = default;
  EmbeddingStack(const EmbeddingConfig& cfg, std::uint64_t seed);

  /// Same architecture with every parameter zero.
  static EmbeddingStack zeros(const EmbeddingConfig& cfg);

  const EmbeddingDims& dims() const { return cfg_.dims; }
  const EmbeddingConfig& config() const { return cfg_; }
  std::uint64_t version() const { return version_; }

  Vector encode_state(const Vector& s) const;
  Vector encode_action(const Vector& a) const;
  Vector joint_embed(const Vector& z_s, const Vector& z_a) const;
  double risk(const Vector& phi) const;

  // Batched forms, one sample per column.
  Matrix encode_states(const Matrix& states) const;
  Matrix encode_actions(const Matrix& actions) const;
  Matrix joint_embed(const Matrix& z_s, const Matrix& z_a) const;
  Vector risk(const Matrix& phi) const;

  /// Mean squared error of h(phi(s, a)) against `targets`; fills `grads`
  /// with the gradient of that loss w.r.t. every parameter when non-null.
  double loss(const Matrix& states, const Matrix& actions, const Vector& targets,
              StackGrads* grads) const;

  /// Runs `epochs` (default: config) passes of shuffled mini-batch Adam over
  /// `data`, normalizing returns per mini-batch. A trailing mini-batch of one
  /// sample is folded into the previous one. Throws TrainingError on NaN.
  TrainReport train_risk(const RiskBatch& data, numeric::Rng& rng,
                         std::optional<int> epochs = std::nullopt);

  void apply_gradients(const StackGrads& grads);

  const numeric::Mlp& f() const { return nets_[0]; }
  const numeric::Mlp& g() const { return nets_[1]; }
  const numeric::Mlp& j() const { return nets_[2]; }
  const numeric::Mlp& h() const { return nets_[3]; }

  /// Direct parameter edits (tests, loading). Advances the version.
  numeric::Mlp& mutable_net(std::size_t index);

  void set_learning_rate(double lr);

  StackSnapshot snapshot() const { return std::make_shared<const EmbeddingStack>(*this); }

  void write(numeric::BinaryWriter& w) const;
  static EmbeddingStack read(numeric::BinaryReader& r, const EmbeddingConfig& cfg);

 private:
  void validate_dims() const;

  EmbeddingConfig cfg_;
  std::array<numeric::Mlp, 4> nets_;
  std::array<numeric::AdamState, 4> adam_;
  std::uint64_t version_ = 0;
};

}  // namespace fema::embedding
