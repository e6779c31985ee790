#include "fema/envs/cliff_corridor.hpp"

#include <cmath>

namespace fema::envs {

StepResult cliff_corridor_step(const CliffParams& p, const Vector& state, const Vector& action, double xi,
                               int t_next) {
  numeric::require_width(state, 4, "cliff_corridor state");
  StepResult out;
  const Vector a = clip_action(action, Vector::Constant(2, -1.0), Vector::Constant(2, 1.0), out.action_clipped);
  const double x = state[0], y = state[1], vx = state[2], vy = state[3];
  out.next_state.resize(4);
  out.next_state[0] = x + p.dt * vx;
  out.next_state[1] = y + p.dt * vy;
  out.next_state[2] = vx + p.dt * (p.forward_gain * a[0] - p.damping * vx);
  out.next_state[3] = vy + p.dt * (p.lateral_gain * a[1] - p.damping * vy) + p.noise * std::sqrt(p.dt) * xi;
  out.reward = out.next_state[2] - p.ctrl_cost * (a[0] * a[0] + a[1] * a[1]);
  if (std::abs(out.next_state[1]) >= p.half_width || out.next_state[0] < p.back_limit) {
    out.end = EndTag::hazard;
  } else if (t_next >= p.max_steps) {
    out.end = EndTag::time_limit;
  }
  return out;
}

EnvSpec CliffCorridor::make_spec(const CliffParams& p) {
  EnvSpec s;
  s.name = "cliff_corridor";
  s.state_dim = 4;
  s.action_dim = 2;
  s.action_low = Vector::Constant(2, -1.0);
  s.action_high = Vector::Constant(2, 1.0);
  s.max_steps = p.max_steps;
  s.hazard = "|y| >= 1 or x < -0.5";
  s.state_scale = Vector::Ones(4);
  s.state_scale[0] = 10.0;  // x spans the corridor length, the rest are O(1)
  return s;
}

CliffCorridor::CliffCorridor(std::uint64_t seed, CliffParams params)
    : params_(params), spec_(make_spec(params)), rng_(seed) {
  spec_.validate();
  reset();
}

Vector CliffCorridor::reset() {
  t_ = 0;
  state_ = Vector::Zero(4);
  state_[1] = params_.init_y > 0.0 ? rng_.uniform(-params_.init_y, params_.init_y) : 0.0;
  return state_;
}

StepResult CliffCorridor::step(const Vector& action) {
  const double xi = params_.noise != 0.0 ? rng_.normal() : 0.0;
  StepResult r = cliff_corridor_step(params_, state_, action, xi, t_ + 1);
  ++t_;
  state_ = r.next_state;
  return r;
}

}  // namespace fema::envs
