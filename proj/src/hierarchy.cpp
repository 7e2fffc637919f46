#include "dchrl/hierarchy.hpp"

#include <algorithm>
#include <deque>
#include <limits>

namespace dchrl {

namespace {

constexpr int kUnreachable = std::numeric_limits<int>::max();

// 4-connected BFS distances over passable frame cells from a seed set.
std::vector<int> bfs_distances(const Observation& obs, const FrameSemantics& sem,
                               const std::vector<std::pair<int, int>>& seeds) {
  std::vector<int> dist(obs.frame_cells(), kUnreachable);
  std::deque<std::pair<int, int>> queue;
  for (auto [r, c] : seeds) {
    const size_t idx = static_cast<size_t>(r) * obs.frame_cols + c;
    if (dist[idx] != kUnreachable) continue;
    dist[idx] = 0;
    queue.emplace_back(r, c);
  }
  while (!queue.empty()) {
    auto [r, c] = queue.front();
    queue.pop_front();
    const int d = dist[static_cast<size_t>(r) * obs.frame_cols + c];
    for (PrimitiveAction a : kMoveOrder) {
      auto [dr, dc] = action_delta(a);
      const int nr = r + dr, nc = c + dc;
      if (!obs.in_frame(nr, nc)) continue;
      if (!sem.is_passable(obs.code_at(nr, nc))) continue;
      const size_t idx = static_cast<size_t>(nr) * obs.frame_cols + nc;
      if (dist[idx] != kUnreachable) continue;
      dist[idx] = d + 1;
      queue.emplace_back(nr, nc);
    }
  }
  return dist;
}

// Standing cells for a goal: the target itself when passable, otherwise its
// passable 4-neighbors (MoveAndInteract next to doors, keys, treasure).
std::vector<std::pair<int, int>> standing_cells(const Observation& obs,
                                                const FrameSemantics& sem, const Goal& g) {
  std::vector<std::pair<int, int>> cells;
  if (sem.is_passable(obs.code_at(g.row, g.col))) {
    cells.emplace_back(g.row, g.col);
    return cells;
  }
  if (g.kind == 1) {
    for (PrimitiveAction a : kMoveOrder) {
      auto [dr, dc] = action_delta(a);
      const int nr = g.row + dr, nc = g.col + dc;
      if (obs.in_frame(nr, nc) && sem.is_passable(obs.code_at(nr, nc))) cells.emplace_back(nr, nc);
    }
  }
  return cells;
}

}  // namespace

std::vector<double> goal_features(const Goal& g, int frame_rows, int frame_cols) {
  return {static_cast<double>(g.row) / frame_rows, static_cast<double>(g.col) / frame_cols,
          static_cast<double>(g.kind)};
}

int GoalMask::count() const {
  int n = 0;
  for (char b : bits) n += (b != 0);
  return n;
}

GoalMask compute_mask(const Observation& obs, const FrameSemantics& sem) {
  GoalMask mask;
  mask.frame_rows = obs.frame_rows;
  mask.frame_cols = obs.frame_cols;
  mask.bits.assign(2 * obs.frame_cells(), 0);

  const std::vector<int> dist =
      bfs_distances(obs, sem, {{obs.agent_row, obs.agent_col}});

  for (int r = 0; r < obs.frame_rows; ++r) {
    for (int c = 0; c < obs.frame_cols; ++c) {
      const size_t idx = static_cast<size_t>(r) * obs.frame_cols + c;
      const int code = obs.code_at(r, c);

      if (sem.is_passable(code) && dist[idx] != kUnreachable) {
        mask.bits[idx] = 1;  // Move
      }
      if (sem.is_interactable(code)) {
        for (auto [sr, sc] : standing_cells(obs, sem, Goal{r, c, 1})) {
          if (dist[static_cast<size_t>(sr) * obs.frame_cols + sc] != kUnreachable) {
            mask.bits[obs.frame_cells() + idx] = 1;
            break;
          }
        }
      }
    }
  }
  // Own cell, Move: always valid (empty plan), so the mask is never empty.
  mask.bits[static_cast<size_t>(obs.agent_row) * obs.frame_cols + obs.agent_col] = 1;
  return mask;
}

std::vector<PrimitiveAction> plan(const Observation& obs, const FrameSemantics& sem,
                                  const Goal& goal) {
  const GoalMask mask = compute_mask(obs, sem);
  if (!mask.valid(goal_flat_index(goal, obs.frame_rows, obs.frame_cols))) {
    throw PlanError("plan: goal is masked invalid");
  }

  std::vector<std::pair<int, int>> stand;
  if (goal.kind == 0) {
    stand.emplace_back(goal.row, goal.col);
  } else {
    stand = standing_cells(obs, sem, goal);
  }

  // Backward BFS from the standing set, then walk greedily from the agent
  // picking the first action (Up, Down, Left, Right) that decreases the
  // distance. This yields the lexicographically smallest shortest plan.
  const std::vector<int> dist = bfs_distances(obs, sem, stand);

  std::vector<PrimitiveAction> actions;
  int r = obs.agent_row, c = obs.agent_col;
  int d = dist[static_cast<size_t>(r) * obs.frame_cols + c];
  if (d == kUnreachable) throw PlanError("plan: no path to goal");
  while (d > 0) {
    for (PrimitiveAction a : kMoveOrder) {
      auto [dr, dc] = action_delta(a);
      const int nr = r + dr, nc = c + dc;
      if (!obs.in_frame(nr, nc)) continue;
      if (!sem.is_passable(obs.code_at(nr, nc))) continue;
      if (dist[static_cast<size_t>(nr) * obs.frame_cols + nc] == d - 1) {
        actions.push_back(a);
        r = nr;
        c = nc;
        d -= 1;
        break;
      }
    }
  }
  if (goal.kind == 1) actions.push_back(PrimitiveAction::Interact);
  return actions;
}

MacroTransition execute_macro(Env& env, const Observation& obs, const Goal& goal,
                              std::vector<StepOutcome>* step_log) {
  MacroTransition macro;
  macro.goal = goal;

  std::vector<PrimitiveAction> sequence = plan(obs, env.semantics(), goal);
  if (sequence.empty()) sequence.push_back(PrimitiveAction::Interact);

  for (PrimitiveAction a : sequence) {
    StepOutcome out = env.step(a);
    macro.actions.push_back(a);
    macro.accumulated_reward += out.reward;
    macro.step_rewards.push_back(out.reward);
    macro.collision = macro.collision || out.info.collision;
    if (!out.info.events.empty()) {
      if (!macro.events.empty()) macro.events += ';';
      macro.events += out.info.events;
    }
    macro.done = out.done;
    if (step_log) step_log->push_back(out);
    macro.next_obs = std::move(out.observation);
    if (macro.done) break;
  }
  macro.duration = static_cast<int>(macro.actions.size());
  return macro;
}

}  // namespace dchrl
