#pragma once

#include "fema/numeric/mlp.hpp"
#include "fema/selection/selection.hpp"

namespace fema::agents {

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Affine map from (-1, 1) onto the environment's action box.
struct ActionScale {
  Vector center;
  Vector half;

  static ActionScale from_bounds(const Vector& low, const Vector& high);
};

double clamp_log_std(double raw);

/// Log-density of a diagonal Gaussian at `x`.
double diag_gaussian_log_prob(const Vector& mean, const Vector& log_std, const Vector& x);

/// Log-density of the tanh-squashed action produced from the raw draw `u`,
/// including the change-of-variables term for the squashing and scaling.
double squashed_log_prob(const Vector& mean, const Vector& log_std, const Vector& u, const ActionScale& scale);

/// SAC-lite actor view: one network emits [mean; log_std] (state-dependent
/// std); actions are center + half * tanh(u).
class SquashedGaussianPolicy final : public selection::StochasticPolicy {
 public:
  SquashedGaussianPolicy(const numeric::Mlp& actor, ActionScale scale) : actor_(actor), scale_(std::move(scale)) {}

  selection::GaussianParams distribution(const Vector& s) const override;
  Vector squash(const Vector& u) const override;

  /// Deterministic evaluation action: squash(mean).
  Vector mean_action(const Vector& s) const;
  double log_prob(const Vector& s, const Vector& u) const;

  /// Mean and clamped log-std rows of a batched actor output.
  static void split_output(const Matrix& out, Eigen::Index d_a, Matrix& mean, Matrix& log_std);

 private:
  const numeric::Mlp& actor_;
  ActionScale scale_;
};

/// PPO-lite actor view: network mean, state-independent learned log-std,
/// unsquashed samples clipped to the action box when applied.
class DiagGaussianPolicy final : public selection::StochasticPolicy {
 public:
  DiagGaussianPolicy(const numeric::Mlp& mean_net, const Vector& log_std, Vector low, Vector high)
      : mean_net_(mean_net), log_std_(log_std), low_(std::move(low)), high_(std::move(high)) {}

  selection::GaussianParams distribution(const Vector& s) const override;
  Vector squash(const Vector& u) const override { return u; }
  Vector to_env(const Vector& a) const override;

  Vector mean_action(const Vector& s) const;
  double log_prob(const Vector& s, const Vector& a) const;
  Vector clamped_log_std() const;

 private:
  const numeric::Mlp& mean_net_;
  const Vector& log_std_;
  Vector low_;
  Vector high_;
};

}  // namespace fema::agents
