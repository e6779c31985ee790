#pragma once

#include "fema/envs/env.hpp"

#include <array>
#include <utility>

namespace fema::envs {

/// 5x5 grid, fully deterministic. Cells (col, row) are observed as
/// (col / 4, row / 4). A continuous 2-D action snaps to one of four moves:
/// the component with the larger magnitude decides the axis (x on ties), its
/// sign the direction (non-negative -> +). Moves off the grid leave the
/// position unchanged.
///
/// Rewards: -0.04 per move; +1 on entering the goal, after which the goal is
/// absorbing with zero reward; -1 and a hazard end on entering a hazard cell.
struct GridParams {
  std::array<std::pair<int, int>, 3> hazards{{{1, 1}, {3, 1}, {2, 3}}};
  std::pair<int, int> start{0, 0};
  std::pair<int, int> goal{4, 4};
  double step_cost = 0.04;
  double goal_bonus = 1.0;
  double hazard_reward = -1.0;
  int max_steps = 25;
};

enum class GridMove : std::uint8_t { pos_x = 0, neg_x = 1, pos_y = 2, neg_y = 3 };

GridMove snap_action(const Vector& action);
Vector move_vector(GridMove m);  // a representative continuous action for a move

StepResult grid_hazard_step(const GridParams& p, const Vector& state, const Vector& action, int t_next);

class GridHazard final : public Env {
 public:
  explicit GridHazard(GridParams params = {});

  const EnvSpec& spec() const override { return spec_; }
  Vector reset() override;
  StepResult step(const Vector& action) override;

  const GridParams& params() const { return params_; }
  static EnvSpec make_spec(const GridParams& p);

 private:
  GridParams params_;
  EnvSpec spec_;
};

}  // namespace fema::envs
