#include <deque>

#include "dchrl/doorkey.hpp"
#include "dchrl/rng.hpp"
#include "doctest.h"

using namespace dchrl;

namespace {

DoorKeyConfig fixed_cfg() {
  DoorKeyConfig cfg;
  cfg.grid_size = 8;
  cfg.max_steps = 128;
  cfg.randomize_agent = false;
  cfg.randomize_door = false;
  cfg.randomize_key = false;
  cfg.randomize_wall = false;
  cfg.randomize_treasure = false;
  return cfg;
}

// Fixed 8x8 layout: wall column 4, door (4,4), agent (1,1), keys (1,2) and
// (1,3), treasure (6,6).
uint64_t seed_with_correct_key(DoorKeyEnv& env, int want) {
  for (uint64_t s = 0; s < 64; ++s) {
    env.reset(s);
    if (env.correct_key() == want) return s;
  }
  FAIL("no seed with the requested correct key");
  return 0;
}

void run(DoorKeyEnv& env, std::initializer_list<PrimitiveAction> actions, double* last = nullptr) {
  for (PrimitiveAction a : actions) {
    StepOutcome out = env.step(a);
    if (last) *last = out.reward;
  }
}

constexpr auto U = PrimitiveAction::Up;
constexpr auto D = PrimitiveAction::Down;
constexpr auto R = PrimitiveAction::Right;
constexpr auto I = PrimitiveAction::Interact;

}  // namespace

TEST_CASE("door opens with the correct key for +1") {
  DoorKeyEnv env(fixed_cfg());
  seed_with_correct_key(env, 1);

  double reward = 0.0;
  run(env, {I}, &reward);  // key 1 is adjacent at (1,2)
  CHECK(reward == 0.0);
  CHECK(env.held_key() == 1);

  run(env, {D, D, D, R, R}, &reward);  // to (4,3), next to the door
  CHECK(reward == 0.0);
  run(env, {I}, &reward);
  CHECK(reward == 1.0);
  CHECK(env.door_open());
}

TEST_CASE("wrong key leaves the door closed with no reward") {
  DoorKeyEnv env(fixed_cfg());
  seed_with_correct_key(env, 2);

  double reward = 0.0;
  run(env, {I}, &reward);  // picks up key 1, which is the wrong one
  CHECK(env.held_key() == 1);
  run(env, {D, D, D, R, R, I}, &reward);
  CHECK(reward == 0.0);
  CHECK(!env.door_open());
}

TEST_CASE("held key never swaps") {
  DoorKeyEnv env(fixed_cfg());
  env.reset(0);
  run(env, {I});  // key 1 at (1,2)
  CHECK(env.held_key() == 1);
  run(env, {R, I});  // now adjacent to key 2 at (1,3)
  CHECK(env.held_key() == 1);
}

TEST_CASE("treasure reward at the horizon boundary is exactly 2") {
  DoorKeyConfig cfg = fixed_cfg();
  DoorKeyEnv env(cfg);
  const uint64_t seed = seed_with_correct_key(env, 1);

  // Open the door and stand next to the treasure at (6,6).
  env.reset(seed);
  run(env, {I, D, D, D, R, R, I});  // pick key, open door
  REQUIRE(env.door_open());
  run(env, {R, R, D, D, R});  // through the door to (6,6)... stop at (6,5)
  REQUIRE(env.grid().agent_row == 6);
  REQUIRE(env.grid().agent_col == 5);

  // Burn steps against the wall, then interact on the very last step.
  while (env.grid().step_count < cfg.max_steps - 1) {
    StepOutcome out = env.step(PrimitiveAction::Down);  // (7,*) is border wall
    REQUIRE(out.info.collision);
  }
  StepOutcome fin = env.step(PrimitiveAction::Interact);
  CHECK(fin.reward == 2.0);  // 5 - 3 * (max_steps / max_steps)
  CHECK(fin.done);
}

TEST_CASE("treasure reward uses the step count at collection time") {
  DoorKeyEnv env(fixed_cfg());
  const uint64_t seed = seed_with_correct_key(env, 1);
  env.reset(seed);
  run(env, {I, D, D, D, R, R, I, R, R, D, D, R});
  const int steps_before = env.grid().step_count;
  StepOutcome fin = env.step(PrimitiveAction::Interact);
  CHECK(fin.done);
  CHECK(fin.reward ==
        5.0 - 3.0 * (static_cast<double>(steps_before + 1) / env.config().max_steps));
  CHECK(fin.reward > 1.0);
}

TEST_CASE("blocked moves cost -0.01 each and legal moves are free") {
  DoorKeyEnv env(fixed_cfg());
  env.reset(0);

  StepOutcome up = env.step(PrimitiveAction::Up);  // border wall above (1,1)
  CHECK(up.reward == -0.01);
  CHECK(up.info.collision);

  StepOutcome down = env.step(PrimitiveAction::Down);
  CHECK(down.reward == 0.0);
  CHECK(!down.info.collision);

  double total = 0.0;
  for (int i = 0; i < 10; ++i) {
    total += env.step(PrimitiveAction::Left).reward;  // (2,0) wall
  }
  CHECK(total == doctest::Approx(-0.10).epsilon(1e-12));
}

TEST_CASE("episode return never exceeds 6 and the door never re-closes") {
  DoorKeyConfig cfg;
  cfg.grid_size = 8;
  cfg.num_keys = 2;
  cfg.max_steps = 256;
  DoorKeyEnv env(cfg);
  Rng rng(99);

  for (uint64_t s = 0; s < 30; ++s) {
    env.reset(s);
    double ret = 0.0;
    bool was_open = false;
    while (true) {
      auto a = static_cast<PrimitiveAction>(rng.next_int(0, 4));
      StepOutcome out = env.step(a);
      ret += out.reward;
      if (was_open) CHECK(env.door_open());
      was_open = env.door_open();
      if (out.done) break;
    }
    CHECK(ret <= 6.0);
  }
}

TEST_CASE("generated layouts are solvable (independent BFS oracle)") {
  DoorKeyConfig cfg;  // default randomized 16x16
  DoorKeyEnv env(cfg);

  auto bfs_adjacent = [](const GridState& g, std::vector<char> blocked, int from_r, int from_c,
                         int to_r, int to_c) {
    std::vector<char> seen(g.cells.size(), 0);
    std::deque<std::pair<int, int>> q;
    seen[from_r * g.width + from_c] = 1;
    q.emplace_back(from_r, from_c);
    while (!q.empty()) {
      auto [r, c] = q.front();
      q.pop_front();
      if (std::abs(r - to_r) + std::abs(c - to_c) == 1) return true;
      const int dr[4] = {-1, 1, 0, 0}, dc[4] = {0, 0, -1, 1};
      for (int k = 0; k < 4; ++k) {
        const int nr = r + dr[k], nc = c + dc[k];
        if (nr < 0 || nr >= g.height || nc < 0 || nc >= g.width) continue;
        if (seen[nr * g.width + nc] || blocked[nr * g.width + nc]) continue;
        seen[nr * g.width + nc] = 1;
        q.emplace_back(nr, nc);
      }
    }
    return false;
  };

  for (uint64_t s = 0; s < 100; ++s) {
    env.reset(s);
    const GridState& g = env.grid();

    std::vector<char> blocked(g.cells.size(), 0);
    int kr = -1, kc = -1, tr = -1, tc = -1;
    for (int r = 0; r < g.height; ++r) {
      for (int c = 0; c < g.width; ++c) {
        if (g.at(r, c).kind != CellKind::Empty) blocked[r * g.width + c] = 1;
        if (g.at(r, c).kind == CellKind::Key && g.at(r, c).id == env.correct_key()) {
          kr = r;
          kc = c;
        }
        if (g.at(r, c).kind == CellKind::Treasure) {
          tr = r;
          tc = c;
        }
      }
    }
    auto [door_r, door_c] = env.door_pos();

    REQUIRE(bfs_adjacent(g, blocked, g.agent_row, g.agent_col, kr, kc));
    blocked[kr * g.width + kc] = 0;
    REQUIRE(bfs_adjacent(g, blocked, g.agent_row, g.agent_col, door_r, door_c));
    blocked[door_r * g.width + door_c] = 0;
    REQUIRE(bfs_adjacent(g, blocked, g.agent_row, g.agent_col, tr, tc));
  }
}

TEST_CASE("ascii dump marks the agent and the door") {
  DoorKeyEnv env(fixed_cfg());
  env.reset(0);
  const std::string art = env.render_ascii();
  CHECK(art.find('@') != std::string::npos);
  CHECK(art.find('+') != std::string::npos);
  CHECK(art.find('T') != std::string::npos);
}
