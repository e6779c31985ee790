#include "fema/agents/policies.hpp"

#include "fema/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fema::agents {

namespace {
const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);
constexpr double kSquashEps = 1e-6;
}  // namespace

ActionScale ActionScale::from_bounds(const Vector& low, const Vector& high) {
  if (low.size() != high.size()) throw ShapeError("ActionScale: bound widths differ");
  return ActionScale{0.5 * (high + low), 0.5 * (high - low)};
}

double clamp_log_std(double raw) { return std::clamp(raw, kLogStdMin, kLogStdMax); }

double diag_gaussian_log_prob(const Vector& mean, const Vector& log_std, const Vector& x) {
  numeric::require_width(x, mean.size(), "log_prob action");
  numeric::require_width(log_std, mean.size(), "log_prob log_std");
  double lp = 0.0;
  for (Eigen::Index k = 0; k < mean.size(); ++k) {
    const double z = (x[k] - mean[k]) / std::exp(log_std[k]);
    lp += -0.5 * z * z - log_std[k] - kHalfLog2Pi;
  }
  return lp;
}

double squashed_log_prob(const Vector& mean, const Vector& log_std, const Vector& u, const ActionScale& scale) {
  double lp = diag_gaussian_log_prob(mean, log_std, u);
  for (Eigen::Index k = 0; k < u.size(); ++k) {
    const double t = std::tanh(u[k]);
    lp -= std::log(scale.half[k]) + std::log(1.0 - t * t + kSquashEps);
  }
  return lp;
}

// ---------------------------------------------------------------------------

void SquashedGaussianPolicy::split_output(const Matrix& out, Eigen::Index d_a, Matrix& mean, Matrix& log_std) {
  mean = out.topRows(d_a);
  log_std = out.bottomRows(d_a).unaryExpr([](double v) { return clamp_log_std(v); });
}

selection::GaussianParams SquashedGaussianPolicy::distribution(const Vector& s) const {
  const Vector out = actor_.apply(s);
  const Eigen::Index d = scale_.half.size();
  if (out.size() != 2 * d) throw ShapeError("SquashedGaussianPolicy: actor output width mismatch");
  selection::GaussianParams p;
  p.mean = out.head(d);
  p.std = out.tail(d).unaryExpr([](double v) { return std::exp(clamp_log_std(v)); });
  return p;
}

Vector SquashedGaussianPolicy::squash(const Vector& u) const {
  return scale_.center + scale_.half.cwiseProduct(u.array().tanh().matrix());
}

Vector SquashedGaussianPolicy::mean_action(const Vector& s) const { return squash(distribution(s).mean); }

double SquashedGaussianPolicy::log_prob(const Vector& s, const Vector& u) const {
  const Vector out = actor_.apply(s);
  const Eigen::Index d = scale_.half.size();
  const Vector log_std = out.tail(d).unaryExpr([](double v) { return clamp_log_std(v); });
  return squashed_log_prob(out.head(d), log_std, u, scale_);
}

// ---------------------------------------------------------------------------

Vector DiagGaussianPolicy::clamped_log_std() const {
  return log_std_.unaryExpr([](double v) { return clamp_log_std(v); });
}

selection::GaussianParams DiagGaussianPolicy::distribution(const Vector& s) const {
  selection::GaussianParams p;
  p.mean = mean_net_.apply(s);
  p.std = clamped_log_std().array().exp();
  return p;
}

Vector DiagGaussianPolicy::to_env(const Vector& a) const { return a.cwiseMax(low_).cwiseMin(high_); }

Vector DiagGaussianPolicy::mean_action(const Vector& s) const { return to_env(mean_net_.apply(s)); }

double DiagGaussianPolicy::log_prob(const Vector& s, const Vector& a) const {
  return diag_gaussian_log_prob(mean_net_.apply(s), clamped_log_std(), a);
}

}  // namespace fema::agents
