#pragma once

#include "dchrl/env_core.hpp"

namespace dchrl {

// Customized DoorKey: two rooms split by a vertical wall with one door, two
// keys (one of which unlocks the door) and a treasure chest behind the door.
//
// Observation cell codes: Empty=0, Wall=1, ClosedDoor=2, OpenDoor=3, Key1=4,
// Key2=5, Treasure=6. Inventory feature: held key id / 2 (0 none, 0.5 key 1,
// 1.0 key 2).
//
// Rewards: +1 for opening the door with the correct key, -0.01 for a blocked
// move, 5 - 3 * (step_count / max_steps) on reaching the treasure (terminal).
struct DoorKeyConfig {
  int grid_size = 16;
  int window = 5;
  int num_keys = 2;
  int max_steps = 512;
  bool randomize_agent = true;
  bool randomize_door = true;
  bool randomize_key = true;
  bool randomize_wall = true;
  bool randomize_treasure = true;

  void validate() const;
};

namespace doorkey_code {
inline constexpr int kEmpty = 0;
inline constexpr int kWall = 1;
inline constexpr int kClosedDoor = 2;
inline constexpr int kOpenDoor = 3;
inline constexpr int kKey1 = 4;
inline constexpr int kKey2 = 5;
inline constexpr int kTreasure = 6;
inline constexpr int kCount = 7;
}  // namespace doorkey_code

class DoorKeyEnv : public Env {
 public:
  explicit DoorKeyEnv(DoorKeyConfig cfg);

  Observation reset(uint64_t seed) override;
  StepOutcome step(PrimitiveAction action) override;
  Observation observe() const override;

  const GridState& grid() const override { return grid_; }
  FrameSemantics semantics() const override;
  int num_codes() const override { return doorkey_code::kCount; }
  ObsMode obs_mode() const override { return ObsMode::Egocentric; }
  int window() const override { return cfg_.window; }
  std::string name() const override { return "doorkey"; }
  std::string render_ascii() const override;

  // Inventory and layout accessors (used by tests and logs).
  int held_key() const { return held_key_; }
  int correct_key() const { return correct_key_; }
  bool door_open() const { return door_open_; }
  std::pair<int, int> door_pos() const { return {door_row_, door_col_}; }

  const DoorKeyConfig& config() const { return cfg_; }

 private:
  void generate(Rng& rng);
  bool layout_solvable() const;
  std::vector<int> cell_codes() const;
  bool passable_cell(int r, int c) const;
  double interact(StepInfo& info);

  DoorKeyConfig cfg_;
  GridState grid_;
  int held_key_ = 0;    // 0 none, otherwise key id
  int correct_key_ = 1;
  bool door_open_ = false;
  int door_row_ = 0;
  int door_col_ = 0;
  bool ready_ = false;
};

}  // namespace dchrl
