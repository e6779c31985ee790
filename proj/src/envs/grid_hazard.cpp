#include "fema/envs/grid_hazard.hpp"

#include "fema/error.hpp"

#include <algorithm>
#include <cmath>

namespace fema::envs {

namespace {

constexpr int kSize = 5;
constexpr double kScale = 4.0;

std::pair<int, int> cell_of(const Vector& state) {
  return {static_cast<int>(std::lround(state[0] * kScale)), static_cast<int>(std::lround(state[1] * kScale))};
}

Vector state_of(std::pair<int, int> cell) {
  Vector s(2);
  s << cell.first / kScale, cell.second / kScale;
  return s;
}

}  // namespace

GridMove snap_action(const Vector& action) {
  numeric::require_width(action, 2, "grid_hazard action");
  if (std::abs(action[0]) >= std::abs(action[1])) return action[0] >= 0.0 ? GridMove::pos_x : GridMove::neg_x;
  return action[1] >= 0.0 ? GridMove::pos_y : GridMove::neg_y;
}

Vector move_vector(GridMove m) {
  Vector a = Vector::Zero(2);
  switch (m) {
    case GridMove::pos_x:
      a[0] = 1.0;
      break;
    case GridMove::neg_x:
      a[0] = -1.0;
      break;
    case GridMove::pos_y:
      a[1] = 1.0;
      break;
    case GridMove::neg_y:
      a[1] = -1.0;
      break;
  }
  return a;
}

StepResult grid_hazard_step(const GridParams& p, const Vector& state, const Vector& action, int t_next) {
  numeric::require_width(state, 2, "grid_hazard state");
  StepResult out;
  const Vector a = clip_action(action, Vector::Constant(2, -1.0), Vector::Constant(2, 1.0), out.action_clipped);
  auto cell = cell_of(state);
  if (cell == p.goal) {
    out.next_state = state;
    out.reward = 0.0;
  } else {
    switch (snap_action(a)) {
      case GridMove::pos_x:
        cell.first = std::min(cell.first + 1, kSize - 1);
        break;
      case GridMove::neg_x:
        cell.first = std::max(cell.first - 1, 0);
        break;
      case GridMove::pos_y:
        cell.second = std::min(cell.second + 1, kSize - 1);
        break;
      case GridMove::neg_y:
        cell.second = std::max(cell.second - 1, 0);
        break;
    }
    out.next_state = state_of(cell);
    if (std::find(p.hazards.begin(), p.hazards.end(), cell) != p.hazards.end()) {
      out.reward = p.hazard_reward;
      out.end = EndTag::hazard;
      return out;
    }
    out.reward = -p.step_cost + (cell == p.goal ? p.goal_bonus : 0.0);
  }
  if (t_next >= p.max_steps) out.end = EndTag::time_limit;
  return out;
}

EnvSpec GridHazard::make_spec(const GridParams& p) {
  EnvSpec s;
  s.name = "grid_hazard";
  s.state_dim = 2;
  s.action_dim = 2;
  s.action_low = Vector::Constant(2, -1.0);
  s.action_high = Vector::Constant(2, 1.0);
  s.max_steps = p.max_steps;
  s.hazard = "entering one of three fixed hazard cells";
  return s;
}

GridHazard::GridHazard(GridParams params) : params_(params), spec_(make_spec(params)) {
  spec_.validate();
  reset();
}

Vector GridHazard::reset() {
  t_ = 0;
  state_ = state_of(params_.start);
  return state_;
}

StepResult GridHazard::step(const Vector& action) {
  StepResult r = grid_hazard_step(params_, state_, action, t_ + 1);
  ++t_;
  state_ = r.next_state;
  return r;
}

}  // namespace fema::envs
