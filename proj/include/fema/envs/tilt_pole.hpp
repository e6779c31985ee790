#pragma once

#include "fema/envs/env.hpp"

namespace fema::envs {

/// Planar inverted pendulum. State (theta, omega); action torque in [-1, 1].
///   theta' = theta + dt omega
///   omega' = omega + dt (g/l sin(theta) + tau_max u / (m l^2)) + sigma sqrt(dt) xi
/// reward = 1 - |theta'| / theta_fail; hazard when |theta'| >= theta_fail.
struct TiltPoleParams {
  double dt = 0.02;
  double gravity = 9.81;
  double mass = 1.0;
  double length = 1.0;
  double max_torque = 10.0;
  double noise = 0.5;
  double theta_fail = 0.8;
  double init_theta = 0.05;  // initial theta ~ U(-init_theta, init_theta), omega = 0
  int max_steps = 500;
};

StepResult tilt_pole_step(const TiltPoleParams& p, const Vector& state, const Vector& action, double xi,
                          int t_next);

class TiltPole final : public Env {
 public:
  TiltPole(std::uint64_t seed, TiltPoleParams params = {});

  const EnvSpec& spec() const override { return spec_; }
  Vector reset() override;
  StepResult step(const Vector& action) override;

  const TiltPoleParams& params() const { return params_; }
  static EnvSpec make_spec(const TiltPoleParams& p);

 private:
  TiltPoleParams params_;
  EnvSpec spec_;
  numeric::Rng rng_;
};

}  // namespace fema::envs
