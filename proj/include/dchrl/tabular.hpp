#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "dchrl/rng.hpp"

namespace dchrl::tabular {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Finite MDP with column-stochastic transition matrices: P[a](i, j) is the
// probability of moving to state i from state j under action a, so the state
// distribution evolves as u' = P[a] u.
struct TabularMDP {
  int n = 0;
  int m = 0;
  std::vector<Mat> P;   // one n x n matrix per action
  Mat reward;           // n x m, R(s, a)
  Vec initial;          // u0
  int horizon = 0;

  bool is_deterministic() const;
  // Successor under a deterministic action; throws for stochastic columns.
  int next(int s, int a) const;

  std::string to_text() const;
  static TabularMDP from_text(const std::string& text);
};

struct ValueIterationResult {
  Vec values;                            // V_H
  std::vector<std::vector<int>> policy;  // greedy action per (time, state)
};

// Exact finite-horizon backward induction.
ValueIterationResult value_iteration(const TabularMDP& mdp, double gamma, int horizon);

// u0-weighted optimal return over `horizon` steps.
double optimal_return(const TabularMDP& mdp, double gamma, int horizon);

// Russian-doll enumeration of all deterministic action sequences; exact but
// exponential, only for tiny MDPs. Independent oracle for value_iteration.
double brute_force_optimal_return(const TabularMDP& mdp, double gamma, int horizon);

// P^pi and R^pi for a stochastic policy pi(a|s) given as an n x m matrix.
Mat policy_transition(const TabularMDP& mdp, const Mat& pi);
Vec policy_reward(const TabularMDP& mdp, const Mat& pi);

// Expected discounted reward accumulated over `steps` transitions starting
// from distribution u under the fixed policy pi.
double expected_reward_between(const TabularMDP& mdp, const Mat& pi, const Vec& u, int steps,
                               double gamma);

// --- Goal-space macros ---

// plans[g][s] is the primitive action sequence macro g executes from state s
// (always at least one action; an empty entry means the macro is unavailable
// in s).
struct MacroGoalSpace {
  std::vector<std::string> names;
  std::vector<std::vector<std::vector<int>>> plans;

  int num_goals() const { return static_cast<int>(plans.size()); }
};

// One macro per primitive action. Hierarchical value iteration over this
// space reproduces the flat problem exactly.
MacroGoalSpace primitive_goal_space(const TabularMDP& mdp);

struct CoverageReport {
  // (state, action) pairs with no single-step macro matching the action's
  // reward and successor.
  std::vector<std::pair<int, int>> uncovered;
  bool covered() const { return uncovered.empty(); }
};

// Effect-level coverage: for every (s, a) some macro must execute exactly one
// primitive with the same reward and successor. Blocked moves count as
// covered through any equal-effect self-loop macro.
CoverageReport check_coverage(const TabularMDP& mdp, const MacroGoalSpace& goals);

// Optimal return achievable by composing goal macros, with a total primitive
// step budget `horizon`. The reward of a macro is the undiscounted sum of its
// primitive rewards and gamma ticks once per macro decision, mirroring the
// macro executor. With a covering goal space and gamma = 1 this equals the
// flat optimum. Throws OracleError listing uncovered actions when
// require_coverage is set.
double hierarchical_optimal_return(const TabularMDP& mdp, const MacroGoalSpace& goals,
                                   double gamma, int horizon, bool require_coverage = true);

// --- Bisimulation ---

// Coarsest partition where states in a block agree on rewards and on the
// block of their successor for every action (deterministic MDPs only). The
// result is canonical: blocks ordered by smallest member, members sorted.
std::vector<std::vector<int>> bisim_partition(const TabularMDP& mdp);

// --- Gridworlds ---

// Deterministic gridworld backing the random oracle instances: 4 movement
// actions plus Interact. Blocked moves and Interact both stay in place and
// share the per-state stay reward, so the composite goal space covers every
// primitive effect.
struct Gridworld {
  int rows = 0;
  int cols = 0;
  std::vector<char> wall;    // row-major
  Mat move_reward;           // n_states x 4 (legal moves)
  Vec stay_reward;           // n_states (blocked moves and Interact)

  std::vector<int> cell_of_state;  // state -> cell index
  std::vector<int> state_of_cell;  // cell index -> state or -1

  int num_states() const { return static_cast<int>(cell_of_state.size()); }
  TabularMDP to_mdp(int horizon) const;

  // Goal space in the style of the hierarchy module: targets within a
  // Chebyshev radius window around the agent, Move and MoveAndInteract kinds,
  // plans produced by the shared planner.
  MacroGoalSpace goal_space(int radius) const;
};

Gridworld random_gridworld(Rng& rng, int max_side = 5, double wall_density = 0.25);

}  // namespace dchrl::tabular
