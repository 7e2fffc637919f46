#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dchrl/rng.hpp"

namespace dchrl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LifecycleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- Grid contents ---

enum class CellKind : uint8_t { Empty, Wall, Door, Key, Treasure, Item, Warehouse };

struct Cell {
  CellKind kind = CellKind::Empty;
  int id = 0;         // key id (1-based) or item type (0-based)
  bool open = false;  // doors only
};

// Full environment configuration: cell contents, agent pose, step counters.
// The agent is tracked solely by (agent_row, agent_col); cells hold static
// content, so an agent standing on an item leaves the item visible.
struct GridState {
  int width = 0;
  int height = 0;
  std::vector<Cell> cells;  // row-major, height * width
  int agent_row = 0;
  int agent_col = 0;
  int step_count = 0;
  int max_steps = 0;
  bool done = false;

  bool in_bounds(int r, int c) const { return r >= 0 && r < height && c >= 0 && c < width; }
  Cell& at(int r, int c) { return cells[static_cast<size_t>(r) * width + c]; }
  const Cell& at(int r, int c) const { return cells[static_cast<size_t>(r) * width + c]; }
};

// --- Actions ---

enum class PrimitiveAction : int { Up = 0, Down = 1, Left = 2, Right = 3, Interact = 4 };

inline constexpr int kNumPrimitiveActions = 5;

// Row/col displacement of a movement action; Interact is (0, 0).
inline std::pair<int, int> action_delta(PrimitiveAction a) {
  switch (a) {
    case PrimitiveAction::Up: return {-1, 0};
    case PrimitiveAction::Down: return {1, 0};
    case PrimitiveAction::Left: return {0, -1};
    case PrimitiveAction::Right: return {0, 1};
    case PrimitiveAction::Interact: return {0, 0};
  }
  return {0, 0};
}

inline const char* action_name(PrimitiveAction a) {
  switch (a) {
    case PrimitiveAction::Up: return "up";
    case PrimitiveAction::Down: return "down";
    case PrimitiveAction::Left: return "left";
    case PrimitiveAction::Right: return "right";
    case PrimitiveAction::Interact: return "interact";
  }
  return "?";
}

// Neighbour scan order shared by interaction resolution and planning
// tie-breaks: Up, Down, Left, Right.
inline constexpr PrimitiveAction kMoveOrder[4] = {
    PrimitiveAction::Up, PrimitiveAction::Down, PrimitiveAction::Left, PrimitiveAction::Right};

// --- Observations ---

enum class ObsMode { FullMap, Egocentric };

// Agent-visible slice of the state. `window` holds one integer cell code per
// frame cell (row-major). In Egocentric mode the frame is a W x W window
// centered on the agent and out-of-bounds cells encode as the Wall code; in
// FullMap mode the frame is the whole grid. Cell codes are environment
// specific and documented next to each environment.
struct Observation {
  ObsMode mode = ObsMode::Egocentric;
  int frame_rows = 0;
  int frame_cols = 0;
  int window_size = 0;  // W in Egocentric mode, 0 for FullMap
  std::vector<int> window;
  std::vector<double> inventory;
  int agent_row = 0;  // agent cell within the frame (the window center in Egocentric mode)
  int agent_col = 0;

  int code_at(int r, int c) const { return window[static_cast<size_t>(r) * frame_cols + c]; }
  bool in_frame(int r, int c) const { return r >= 0 && r < frame_rows && c >= 0 && c < frame_cols; }
  size_t frame_cells() const { return static_cast<size_t>(frame_rows) * frame_cols; }
};

struct StepInfo {
  bool collision = false;
  std::string events;  // semicolon-separated event tags

  void tag(const std::string& e) {
    if (!events.empty()) events += ';';
    events += e;
  }
};

struct StepOutcome {
  Observation observation;
  double reward = 0.0;
  bool done = false;
  StepInfo info;
};

// Per-code passability / interactability lookup used by the goal planner.
struct FrameSemantics {
  std::vector<char> passable;
  std::vector<char> interactable;

  bool is_passable(int code) const {
    return code >= 0 && code < static_cast<int>(passable.size()) && passable[code];
  }
  bool is_interactable(int code) const {
    return code >= 0 && code < static_cast<int>(interactable.size()) && interactable[code];
  }
};

// --- Environment contract ---

// Single-threaded state machine: reset(seed) regenerates the layout
// deterministically, step() advances one primitive action. Instances share
// no mutable state, so independent instances may run on different threads.
class Env {
 public:
  virtual ~Env() = default;

  virtual Observation reset(uint64_t seed) = 0;
  virtual StepOutcome step(PrimitiveAction action) = 0;
  virtual Observation observe() const = 0;

  virtual const GridState& grid() const = 0;
  virtual FrameSemantics semantics() const = 0;
  virtual int num_codes() const = 0;
  virtual ObsMode obs_mode() const = 0;
  virtual int window() const = 0;
  virtual std::string name() const = 0;

  // One char per cell; legend documented per environment.
  virtual std::string render_ascii() const = 0;
};

// Egocentric window extraction: W x W codes centered on the agent,
// out-of-bounds filled with `wall_code`.
std::vector<int> extract_window(const GridState& s, int W, int wall_code,
                                const std::vector<int>& full_codes);

// Observation feature vector: window codes scaled by 1/num_codes followed by
// the inventory features. This is the per-step encoding consumed by policies
// and the abstraction encoder.
std::vector<double> observation_features(const Observation& obs, int num_codes);

}  // namespace dchrl
