#pragma once

#include "fema/envs/env.hpp"

namespace fema::envs {

/// Point mass in a corridor. State (x, y, vx, vy); action (ax, ay) in [-1, 1]^2.
///
/// Explicit Euler with step dt:
///   x'  = x + dt vx                 y'  = y + dt vy
///   vx' = vx + dt (Gf ax - c vx)    vy' = vy + dt (Gl ay - c vy) + sigma sqrt(dt) xi
/// reward = vx' - c_u (ax^2 + ay^2); hazard when |y'| >= 1 or x' < -0.5.
/// Under full forward thrust vx approaches Gf / c = 0.5, so x spans about
/// [0, 10] over the 400-step horizon.
struct CliffParams {
  double dt = 0.05;
  double forward_gain = 0.5;  // Gf
  double lateral_gain = 6.0;  // Gl
  double damping = 1.0;       // c
  double noise = 2.0;         // sigma, lateral velocity disturbance
  double ctrl_cost = 0.01;    // c_u
  double half_width = 1.0;
  double back_limit = -0.5;
  double init_y = 0.1;  // initial y ~ U(-init_y, init_y), at rest at x = 0
  int max_steps = 400;
};

/// Pure transition given the disturbance draw `xi`; `t_next` is the step
/// count after this step (used for the time limit).
StepResult cliff_corridor_step(const CliffParams& p, const Vector& state, const Vector& action, double xi,
                               int t_next);

class CliffCorridor final : public Env {
 public:
  CliffCorridor(std::uint64_t seed, CliffParams params = {});

  const EnvSpec& spec() const override { return spec_; }
  Vector reset() override;
  StepResult step(const Vector& action) override;

  const CliffParams& params() const { return params_; }
  static EnvSpec make_spec(const CliffParams& p);

 private:
  CliffParams params_;
  EnvSpec spec_;
  numeric::Rng rng_;
};

}  // namespace fema::envs
