#include "dchrl/multi_item.hpp"

#include <algorithm>
#include <numeric>

namespace dchrl {

std::vector<int> MultiItemConfig::items_per_type() const {
  const int total_groups = total_items / group_size;
  const int base = total_groups / num_item_types;
  const int extra = total_groups % num_item_types;
  std::vector<int> counts(num_item_types);
  for (int t = 0; t < num_item_types; ++t) {
    counts[t] = (base + (t < extra ? 1 : 0)) * group_size;
  }
  return counts;
}

void MultiItemConfig::validate() const {
  if (grid_size < 2) throw ConfigError("multiitem: grid_size must be >= 2");
  if (num_item_types < 1) throw ConfigError("multiitem: num_item_types must be >= 1");
  if (group_size < 1) throw ConfigError("multiitem: group_size must be >= 1");
  if (total_items % group_size != 0)
    throw ConfigError("multiitem: total_items must be a multiple of group_size");
  if (total_items / group_size < num_item_types)
    throw ConfigError("multiitem: need at least one group per item type");
  if (total_items > grid_size * grid_size - 1)
    throw ConfigError("multiitem: items do not fit on the grid");
  if (window < 3 || window % 2 == 0)
    throw ConfigError("multiitem: window must be odd and >= 3");
  if (max_steps < 1) throw ConfigError("multiitem: max_steps must be positive");
  if (penalty_divisor <= 0) throw ConfigError("multiitem: penalty_divisor must be positive");
}

MultiItemEnv::MultiItemEnv(MultiItemConfig cfg) : cfg_(cfg) { cfg_.validate(); }

void MultiItemEnv::generate(Rng& layout_rng, Rng& agent_rng) {
  const int n = cfg_.grid_size;
  grid_ = GridState{};
  grid_.width = n;
  grid_.height = n;
  grid_.max_steps = cfg_.max_steps;
  grid_.cells.assign(static_cast<size_t>(n) * n, Cell{});
  grid_.at(0, 0).kind = CellKind::Warehouse;

  // Items land on distinct non-warehouse cells: shuffle the free cells and
  // assign types in order.
  std::vector<int> free_cells;
  free_cells.reserve(static_cast<size_t>(n) * n - 1);
  for (int i = 1; i < n * n; ++i) free_cells.push_back(i);
  layout_rng.shuffle(free_cells);

  const std::vector<int> per_type = cfg_.items_per_type();
  size_t next_free = 0;
  for (int t = 0; t < cfg_.num_item_types; ++t) {
    for (int k = 0; k < per_type[t]; ++k) {
      Cell& cell = grid_.cells[static_cast<size_t>(free_cells[next_free++])];
      cell.kind = CellKind::Item;
      cell.id = t;
    }
  }

  // Agent start: uniform over non-warehouse cells (items are passable).
  const int agent_cell = free_cells[static_cast<size_t>(
      agent_rng.next_below(static_cast<uint64_t>(free_cells.size())))];
  grid_.agent_row = agent_cell / n;
  grid_.agent_col = agent_cell % n;

  backpack_.assign(cfg_.num_item_types, 0);
  submitted_groups_.assign(cfg_.num_item_types, 0);
  carry_number_ = 0;
  submit_number_ = 0;
}

Observation MultiItemEnv::reset(uint64_t seed) {
  Rng root(seed);
  Rng layout = cfg_.layout_seed != 0 ? Rng(cfg_.layout_seed).fork("layout") : root.fork("layout");
  Rng agent = root.fork("agent");
  generate(layout, agent);
  ready_ = true;
  return observe();
}

std::vector<int> MultiItemEnv::cell_codes() const {
  std::vector<int> codes(grid_.cells.size(), multiitem_code::kEmpty);
  for (size_t i = 0; i < grid_.cells.size(); ++i) {
    const Cell& cell = grid_.cells[i];
    switch (cell.kind) {
      case CellKind::Warehouse: codes[i] = multiitem_code::kWarehouse; break;
      case CellKind::Item: codes[i] = multiitem_code::kItemBase + cell.id; break;
      default: codes[i] = multiitem_code::kEmpty; break;
    }
  }
  return codes;
}

Observation MultiItemEnv::observe() const {
  Observation obs;
  obs.mode = cfg_.mode;
  obs.inventory.reserve(static_cast<size_t>(cfg_.num_item_types) + 2);
  for (int count : backpack_) {
    obs.inventory.push_back(static_cast<double>(count) / cfg_.group_size);
  }
  if (cfg_.mode == ObsMode::Egocentric) {
    obs.window_size = cfg_.window;
    obs.frame_rows = cfg_.window;
    obs.frame_cols = cfg_.window;
    obs.window = extract_window(grid_, cfg_.window, multiitem_code::kWall, cell_codes());
    obs.agent_row = cfg_.window / 2;
    obs.agent_col = cfg_.window / 2;
  } else {
    obs.window_size = 0;
    obs.frame_rows = grid_.height;
    obs.frame_cols = grid_.width;
    obs.window = cell_codes();
    obs.agent_row = grid_.agent_row;
    obs.agent_col = grid_.agent_col;
    obs.inventory.push_back(static_cast<double>(grid_.agent_row) / (grid_.height - 1));
    obs.inventory.push_back(static_cast<double>(grid_.agent_col) / (grid_.width - 1));
  }
  return obs;
}

FrameSemantics MultiItemEnv::semantics() const {
  const int codes = num_codes();
  FrameSemantics sem;
  sem.passable.assign(codes, 1);
  sem.passable[multiitem_code::kWall] = 0;
  sem.interactable.assign(codes, 0);
  sem.interactable[multiitem_code::kWarehouse] = 1;
  for (int t = 0; t < cfg_.num_item_types; ++t) sem.interactable[multiitem_code::kItemBase + t] = 1;
  return sem;
}

double MultiItemEnv::interact(StepInfo& info) {
  Cell& here = grid_.at(grid_.agent_row, grid_.agent_col);
  if (here.kind == CellKind::Item) {
    backpack_[here.id] += 1;
    carry_number_ += 1;
    info.tag("pickup");
    here = Cell{};
    return 0.0;
  }
  if (here.kind == CellKind::Warehouse) {
    int groups = 0;
    for (int t = 0; t < cfg_.num_item_types; ++t) {
      const int g = backpack_[t] / cfg_.group_size;
      if (g == 0) continue;
      groups += g;
      submitted_groups_[t] += g;
      backpack_[t] -= g * cfg_.group_size;
      carry_number_ -= g * cfg_.group_size;
      submit_number_ += g * cfg_.group_size;
    }
    if (groups > 0) info.tag("submit");
    return 3.0 * groups;
  }
  return 0.0;
}

StepOutcome MultiItemEnv::step(PrimitiveAction action) {
  if (!ready_) throw LifecycleError("multiitem: step before reset");
  if (grid_.done) throw LifecycleError("multiitem: step after episode end");

  grid_.step_count += 1;
  StepOutcome out;
  // Every primitive step pays the movement penalty at the carry count held
  // while acting.
  out.reward = movement_penalty(carry_number_, cfg_.penalty_divisor);

  if (action == PrimitiveAction::Interact) {
    out.reward += interact(out.info);
  } else {
    auto [dr, dc] = action_delta(action);
    const int nr = grid_.agent_row + dr, nc = grid_.agent_col + dc;
    if (grid_.in_bounds(nr, nc) && grid_.at(nr, nc).kind != CellKind::Wall) {
      grid_.agent_row = nr;
      grid_.agent_col = nc;
    } else {
      out.info.collision = true;
    }
  }

  if (completed()) {
    grid_.done = true;
    out.reward += 100.0;
    out.info.tag("complete");
  } else if (grid_.step_count >= grid_.max_steps) {
    grid_.done = true;
    if (cfg_.penalty_counts_groups) {
      const int total_groups = cfg_.total_items / cfg_.group_size;
      const int done_groups = submit_number_ / cfg_.group_size;
      out.reward -= static_cast<double>(total_groups - done_groups);
    } else {
      out.reward -= static_cast<double>(cfg_.total_items - submit_number_);
    }
    out.info.tag("incomplete");
  }

  out.done = grid_.done;
  out.observation = observe();
  return out;
}

std::string MultiItemEnv::render_ascii() const {
  // Legend: 'W' warehouse, '.' empty, 'a'-'u' item types 0-20 (then '?'),
  // '@' agent.
  std::string out;
  out.reserve(static_cast<size_t>(grid_.height) * (grid_.width + 1));
  for (int r = 0; r < grid_.height; ++r) {
    for (int c = 0; c < grid_.width; ++c) {
      char ch = '.';
      const Cell& cell = grid_.at(r, c);
      if (cell.kind == CellKind::Warehouse) ch = 'W';
      if (cell.kind == CellKind::Item) ch = cell.id < 26 ? static_cast<char>('a' + cell.id) : '?';
      if (r == grid_.agent_row && c == grid_.agent_col) ch = '@';
      out += ch;
    }
    out += '\n';
  }
  return out;
}

}  // namespace dchrl
