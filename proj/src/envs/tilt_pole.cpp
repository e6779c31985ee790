#include "fema/envs/tilt_pole.hpp"

#include <cmath>

namespace fema::envs {

StepResult tilt_pole_step(const TiltPoleParams& p, const Vector& state, const Vector& action, double xi,
                          int t_next) {
  numeric::require_width(state, 2, "tilt_pole state");
  StepResult out;
  const Vector u = clip_action(action, Vector::Constant(1, -1.0), Vector::Constant(1, 1.0), out.action_clipped);
  const double theta = state[0], omega = state[1];
  const double accel = p.gravity / p.length * std::sin(theta) +
                       p.max_torque * u[0] / (p.mass * p.length * p.length);
  out.next_state.resize(2);
  out.next_state[0] = theta + p.dt * omega;
  out.next_state[1] = omega + p.dt * accel + p.noise * std::sqrt(p.dt) * xi;
  out.reward = 1.0 - std::abs(out.next_state[0]) / p.theta_fail;
  if (std::abs(out.next_state[0]) >= p.theta_fail) {
    out.end = EndTag::hazard;
  } else if (t_next >= p.max_steps) {
    out.end = EndTag::time_limit;
  }
  return out;
}

EnvSpec TiltPole::make_spec(const TiltPoleParams& p) {
  EnvSpec s;
  s.name = "tilt_pole";
  s.state_dim = 2;
  s.action_dim = 1;
  s.action_low = Vector::Constant(1, -1.0);
  s.action_high = Vector::Constant(1, 1.0);
  s.max_steps = p.max_steps;
  s.hazard = "|theta| >= 0.8 rad";
  return s;
}

TiltPole::TiltPole(std::uint64_t seed, TiltPoleParams params)
    : params_(params), spec_(make_spec(params)), rng_(seed) {
  spec_.validate();
  reset();
}

Vector TiltPole::reset() {
  t_ = 0;
  state_ = Vector::Zero(2);
  state_[0] = params_.init_theta > 0.0 ? rng_.uniform(-params_.init_theta, params_.init_theta) : 0.0;
  return state_;
}

StepResult TiltPole::step(const Vector& action) {
  const double xi = params_.noise != 0.0 ? rng_.normal() : 0.0;
  StepResult r = tilt_pole_step(params_, state_, action, xi, t_ + 1);
  ++t_;
  state_ = r.next_state;
  return r;
}

}  // namespace fema::envs
