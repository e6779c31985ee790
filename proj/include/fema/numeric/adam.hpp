#pragma once

#include "fema/numeric/mlp.hpp"

#include <cstdint>

namespace fema::numeric {

struct AdamHyper {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment accumulators mirroring the parameter shapes of one network.
struct AdamState {
  AdamHyper hyper;
  std::int64_t step = 0;
  MlpGrads m;
  MlpGrads v;

  static AdamState for_mlp(const Mlp& net, const AdamHyper& hyper = {});
};

/// One bias-corrected Adam update of every parameter of `net`.
void adam_step(Mlp& net, const MlpGrads& grads, AdamState& state);

/// Adam over a free parameter vector (log-std vectors, temperatures).
struct VectorAdam {
  AdamHyper hyper;
  std::int64_t step = 0;
  Vector m;
  Vector v;

  VectorAdam() = default;
  VectorAdam(Eigen::Index n, const AdamHyper& hyper);

  void apply(Vector& param, const Vector& grad);
};

}  // namespace fema::numeric
