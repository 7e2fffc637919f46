#include "dchrl/doorkey.hpp"

#include <algorithm>
#include <deque>

namespace dchrl {

namespace {

// BFS reachability over passable cells. Returns per-cell reachable flags.
std::vector<char> reachable_from(const GridState& g, int r0, int c0,
                                 const std::vector<char>& blocked) {
  std::vector<char> seen(g.cells.size(), 0);
  std::deque<std::pair<int, int>> queue;
  seen[static_cast<size_t>(r0) * g.width + c0] = 1;
  queue.emplace_back(r0, c0);
  while (!queue.empty()) {
    auto [r, c] = queue.front();
    queue.pop_front();
    for (PrimitiveAction a : kMoveOrder) {
      auto [dr, dc] = action_delta(a);
      const int nr = r + dr, nc = c + dc;
      if (!g.in_bounds(nr, nc)) continue;
      const size_t idx = static_cast<size_t>(nr) * g.width + nc;
      if (seen[idx] || blocked[idx]) continue;
      seen[idx] = 1;
      queue.emplace_back(nr, nc);
    }
  }
  return seen;
}

bool adjacent_reachable(const GridState& g, const std::vector<char>& seen, int r, int c) {
  for (PrimitiveAction a : kMoveOrder) {
    auto [dr, dc] = action_delta(a);
    const int nr = r + dr, nc = c + dc;
    if (g.in_bounds(nr, nc) && seen[static_cast<size_t>(nr) * g.width + nc]) return true;
  }
  return false;
}

}  // namespace

void DoorKeyConfig::validate() const {
  if (grid_size < 6) throw ConfigError("doorkey: grid_size must be >= 6");
  if (window < 3 || window % 2 == 0) throw ConfigError("doorkey: window must be odd and >= 3");
  if (num_keys < 1 || num_keys > 2) throw ConfigError("doorkey: num_keys must be 1 or 2");
  if (max_steps < 1) throw ConfigError("doorkey: max_steps must be positive");
}

DoorKeyEnv::DoorKeyEnv(DoorKeyConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void DoorKeyEnv::generate(Rng& rng) {
  const int n = cfg_.grid_size;
  grid_ = GridState{};
  grid_.width = n;
  grid_.height = n;
  grid_.max_steps = cfg_.max_steps;
  grid_.cells.assign(static_cast<size_t>(n) * n, Cell{});

  // Border walls.
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      if (r == 0 || c == 0 || r == n - 1 || c == n - 1) grid_.at(r, c).kind = CellKind::Wall;
    }
  }

  // Dividing wall column; both rooms keep at least one interior column.
  Rng wall_rng = rng.fork("wall");
  door_col_ = cfg_.randomize_wall ? wall_rng.next_int(2, n - 3) : n / 2;
  for (int r = 1; r < n - 1; ++r) grid_.at(r, door_col_).kind = CellKind::Wall;

  Rng door_rng = rng.fork("door");
  door_row_ = cfg_.randomize_door ? door_rng.next_int(1, n - 2) : n / 2;
  Cell& door = grid_.at(door_row_, door_col_);
  door.kind = CellKind::Door;
  door.open = false;
  door_open_ = false;

  auto place_in = [&](Rng& r, int col_lo, int col_hi) {
    while (true) {
      const int rr = r.next_int(1, n - 2);
      const int cc = r.next_int(col_lo, col_hi);
      if (grid_.at(rr, cc).kind == CellKind::Empty) return std::make_pair(rr, cc);
    }
  };

  // Agent and keys start in room A (left of the wall); treasure in room B.
  Rng agent_rng = rng.fork("agent");
  if (cfg_.randomize_agent) {
    auto [ar, ac] = place_in(agent_rng, 1, door_col_ - 1);
    grid_.agent_row = ar;
    grid_.agent_col = ac;
  } else {
    grid_.agent_row = 1;
    grid_.agent_col = 1;
  }

  Rng key_rng = rng.fork("keys");
  if (cfg_.randomize_key) {
    for (int k = 1; k <= cfg_.num_keys; ++k) {
      while (true) {
        auto [kr, kc] = place_in(key_rng, 1, door_col_ - 1);
        if (kr == grid_.agent_row && kc == grid_.agent_col) continue;
        Cell& cell = grid_.at(kr, kc);
        cell.kind = CellKind::Key;
        cell.id = k;
        break;
      }
    }
  } else {
    // Fixed placement: first free room-A cells in row-major order.
    int placed = 0;
    for (int r = 1; r < n - 1 && placed < cfg_.num_keys; ++r) {
      for (int c = 1; c < door_col_ && placed < cfg_.num_keys; ++c) {
        if (grid_.at(r, c).kind != CellKind::Empty) continue;
        if (r == grid_.agent_row && c == grid_.agent_col) continue;
        grid_.at(r, c).kind = CellKind::Key;
        grid_.at(r, c).id = ++placed;
      }
    }
  }

  Rng treasure_rng = rng.fork("treasure");
  if (cfg_.randomize_treasure) {
    auto [tr, tc] = place_in(treasure_rng, door_col_ + 1, n - 2);
    grid_.at(tr, tc).kind = CellKind::Treasure;
  } else {
    grid_.at(n - 2, n - 2).kind = CellKind::Treasure;
  }

  Rng correct_rng = rng.fork("correct_key");
  correct_key_ = cfg_.num_keys == 1 ? 1 : correct_rng.next_int(1, cfg_.num_keys);
  held_key_ = 0;
}

bool DoorKeyEnv::layout_solvable() const {
  const GridState& g = grid_;
  std::vector<char> blocked(g.cells.size(), 0);
  int key_r = -1, key_c = -1, treasure_r = -1, treasure_c = -1;
  for (int r = 0; r < g.height; ++r) {
    for (int c = 0; c < g.width; ++c) {
      const Cell& cell = g.at(r, c);
      if (cell.kind != CellKind::Empty) blocked[static_cast<size_t>(r) * g.width + c] = 1;
      if (cell.kind == CellKind::Key && cell.id == correct_key_) {
        key_r = r;
        key_c = c;
      }
      if (cell.kind == CellKind::Treasure) {
        treasure_r = r;
        treasure_c = c;
      }
    }
  }

  // Reach the correct key, then the door, then (door open) the treasure.
  std::vector<char> seen = reachable_from(g, g.agent_row, g.agent_col, blocked);
  if (!adjacent_reachable(g, seen, key_r, key_c)) return false;

  blocked[static_cast<size_t>(key_r) * g.width + key_c] = 0;
  seen = reachable_from(g, g.agent_row, g.agent_col, blocked);
  if (!adjacent_reachable(g, seen, door_row_, door_col_)) return false;

  blocked[static_cast<size_t>(door_row_) * g.width + door_col_] = 0;
  seen = reachable_from(g, g.agent_row, g.agent_col, blocked);
  return adjacent_reachable(g, seen, treasure_r, treasure_c);
}

Observation DoorKeyEnv::reset(uint64_t seed) {
  Rng root(seed);
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Rng layout = root.fork("layout", static_cast<uint64_t>(attempt));
    generate(layout);
    if (layout_solvable()) {
      ready_ = true;
      return observe();
    }
  }
  throw ConfigError("doorkey: no solvable layout found in 1000 attempts");
}

std::vector<int> DoorKeyEnv::cell_codes() const {
  std::vector<int> codes(grid_.cells.size(), doorkey_code::kEmpty);
  for (size_t i = 0; i < grid_.cells.size(); ++i) {
    const Cell& cell = grid_.cells[i];
    switch (cell.kind) {
      case CellKind::Empty: codes[i] = doorkey_code::kEmpty; break;
      case CellKind::Wall: codes[i] = doorkey_code::kWall; break;
      case CellKind::Door: codes[i] = cell.open ? doorkey_code::kOpenDoor : doorkey_code::kClosedDoor; break;
      case CellKind::Key: codes[i] = cell.id == 1 ? doorkey_code::kKey1 : doorkey_code::kKey2; break;
      case CellKind::Treasure: codes[i] = doorkey_code::kTreasure; break;
      default: codes[i] = doorkey_code::kEmpty; break;
    }
  }
  return codes;
}

Observation DoorKeyEnv::observe() const {
  Observation obs;
  obs.mode = ObsMode::Egocentric;
  obs.window_size = cfg_.window;
  obs.frame_rows = cfg_.window;
  obs.frame_cols = cfg_.window;
  obs.window = extract_window(grid_, cfg_.window, doorkey_code::kWall, cell_codes());
  obs.inventory = {static_cast<double>(held_key_) / 2.0};
  obs.agent_row = cfg_.window / 2;
  obs.agent_col = cfg_.window / 2;
  return obs;
}

FrameSemantics DoorKeyEnv::semantics() const {
  FrameSemantics sem;
  sem.passable.assign(doorkey_code::kCount, 0);
  sem.passable[doorkey_code::kEmpty] = 1;
  sem.passable[doorkey_code::kOpenDoor] = 1;
  sem.interactable.assign(doorkey_code::kCount, 0);
  sem.interactable[doorkey_code::kClosedDoor] = 1;
  sem.interactable[doorkey_code::kKey1] = 1;
  sem.interactable[doorkey_code::kKey2] = 1;
  sem.interactable[doorkey_code::kTreasure] = 1;
  return sem;
}

bool DoorKeyEnv::passable_cell(int r, int c) const {
  if (!grid_.in_bounds(r, c)) return false;
  const Cell& cell = grid_.at(r, c);
  if (cell.kind == CellKind::Empty) return true;
  if (cell.kind == CellKind::Door) return cell.open;
  return false;
}

double DoorKeyEnv::interact(StepInfo& info) {
  // Target priority among adjacent cells: closed door > key > treasure.
  int door_r = -1, door_c = -1, key_r = -1, key_c = -1;
  bool treasure_adjacent = false;
  for (PrimitiveAction a : kMoveOrder) {
    auto [dr, dc] = action_delta(a);
    const int r = grid_.agent_row + dr, c = grid_.agent_col + dc;
    if (!grid_.in_bounds(r, c)) continue;
    const Cell& cell = grid_.at(r, c);
    if (cell.kind == CellKind::Door && !cell.open && door_r < 0) {
      door_r = r;
      door_c = c;
    } else if (cell.kind == CellKind::Key && key_r < 0) {
      key_r = r;
      key_c = c;
    } else if (cell.kind == CellKind::Treasure) {
      treasure_adjacent = true;
    }
  }

  if (door_r >= 0) {
    if (held_key_ == correct_key_ && held_key_ != 0) {
      grid_.at(door_r, door_c).open = true;
      door_open_ = true;
      info.tag("door_open");
      return 1.0;
    }
    info.tag("door_locked");
    return 0.0;
  }
  if (key_r >= 0) {
    if (held_key_ == 0) {
      held_key_ = grid_.at(key_r, key_c).id;
      grid_.at(key_r, key_c) = Cell{};
      info.tag("key_pickup");
    }
    return 0.0;
  }
  if (treasure_adjacent) {
    grid_.done = true;
    info.tag("treasure");
    return 5.0 - 3.0 * (static_cast<double>(grid_.step_count) / grid_.max_steps);
  }
  return 0.0;
}

StepOutcome DoorKeyEnv::step(PrimitiveAction action) {
  if (!ready_) throw LifecycleError("doorkey: step before reset");
  if (grid_.done) throw LifecycleError("doorkey: step after episode end");

  grid_.step_count += 1;
  StepOutcome out;

  if (action == PrimitiveAction::Interact) {
    out.reward = interact(out.info);
  } else {
    auto [dr, dc] = action_delta(action);
    const int nr = grid_.agent_row + dr, nc = grid_.agent_col + dc;
    if (passable_cell(nr, nc)) {
      grid_.agent_row = nr;
      grid_.agent_col = nc;
    } else {
      out.info.collision = true;
      out.reward = -0.01;
    }
  }

  if (grid_.step_count >= grid_.max_steps) grid_.done = true;
  out.done = grid_.done;
  out.observation = observe();
  return out;
}

std::string DoorKeyEnv::render_ascii() const {
  // Legend: '#' wall, '.' empty, '+' closed door, '/' open door,
  // '1'/'2' keys, 'T' treasure, '@' agent.
  std::string out;
  out.reserve(static_cast<size_t>(grid_.height) * (grid_.width + 1));
  for (int r = 0; r < grid_.height; ++r) {
    for (int c = 0; c < grid_.width; ++c) {
      char ch = '.';
      const Cell& cell = grid_.at(r, c);
      switch (cell.kind) {
        case CellKind::Wall: ch = '#'; break;
        case CellKind::Door: ch = cell.open ? '/' : '+'; break;
        case CellKind::Key: ch = static_cast<char>('0' + cell.id); break;
        case CellKind::Treasure: ch = 'T'; break;
        default: ch = '.'; break;
      }
      if (r == grid_.agent_row && c == grid_.agent_col) ch = '@';
      out += ch;
    }
    out += '\n';
  }
  return out;
}

}  // namespace dchrl
