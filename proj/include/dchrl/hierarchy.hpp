#pragma once

#include "dchrl/env_core.hpp"

namespace dchrl {

struct PlanError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Composite action: a target cell inside the observation frame plus an
// action type (Move or MoveAndInteract). Flat packing over a frame of
// R x C cells: index = kind * R*C + row * C + col.
struct Goal {
  int row = 0;
  int col = 0;
  int kind = 0;  // 0 = Move, 1 = MoveAndInteract
};

inline int goal_count(const Observation& obs) {
  return 2 * obs.frame_rows * obs.frame_cols;
}

inline int goal_flat_index(const Goal& g, int frame_rows, int frame_cols) {
  return g.kind * frame_rows * frame_cols + g.row * frame_cols + g.col;
}

inline Goal goal_from_flat(int index, int frame_rows, int frame_cols) {
  const int cells = frame_rows * frame_cols;
  Goal g;
  g.kind = index / cells;
  g.row = (index % cells) / frame_cols;
  g.col = index % frame_cols;
  return g;
}

// Normalized goal features (row/W, col/W, kind) used as the action encoding
// for the abstraction heads and the history sequence.
std::vector<double> goal_features(const Goal& g, int frame_rows, int frame_cols);

struct GoalMask {
  int frame_rows = 0;
  int frame_cols = 0;
  std::vector<char> bits;  // length 2 * frame_rows * frame_cols

  bool valid(int flat_index) const { return bits[static_cast<size_t>(flat_index)] != 0; }
  int count() const;
};

// Validity of every goal in the frame.
//
// Move goals are valid iff the target code is passable and reachable from the
// agent cell by 4-connected search through passable cells. MoveAndInteract
// goals are valid iff the target cell contains an interactable object and a
// standing cell for it is reachable: the target itself when passable,
// otherwise one of its 4-neighbors. The agent's own cell with Move is always
// valid (empty plan), which keeps the mask non-empty.
GoalMask compute_mask(const Observation& obs, const FrameSemantics& sem);

// Shortest primitive action sequence realizing a valid goal inside the frame.
// Ties between equal-length paths break lexicographically with action
// preference Up < Down < Left < Right; MoveAndInteract appends Interact.
// Throws PlanError for goals the mask rejects.
std::vector<PrimitiveAction> plan(const Observation& obs, const FrameSemantics& sem,
                                  const Goal& goal);

// One high-level decision executed to completion.
struct MacroTransition {
  Goal goal;
  std::vector<PrimitiveAction> actions;  // actually executed
  double accumulated_reward = 0.0;
  std::vector<double> step_rewards;  // per primitive step, in execution order
  int duration = 0;
  Observation next_obs;
  bool done = false;
  std::string events;
  bool collision = false;
};

// Runs the planned sequence open loop (no mid-macro replanning), stopping
// early if the episode ends. An empty plan (own cell, Move) executes a single
// Interact primitive so every macro consumes at least one environment step.
// `step_log`, when given, receives every primitive StepOutcome.
MacroTransition execute_macro(Env& env, const Observation& obs, const Goal& goal,
                              std::vector<StepOutcome>* step_log = nullptr);

}  // namespace dchrl
