#include "dchrl/tabular.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "dchrl/hierarchy.hpp"

namespace dchrl::tabular {

bool TabularMDP::is_deterministic() const {
  for (const Mat& Pa : P) {
    for (int j = 0; j < n; ++j) {
      int ones = 0;
      for (int i = 0; i < n; ++i) {
        const double p = Pa(i, j);
        if (p == 1.0) ++ones;
        else if (p != 0.0) return false;
      }
      if (ones != 1) return false;
    }
  }
  return true;
}

int TabularMDP::next(int s, int a) const {
  for (int i = 0; i < n; ++i) {
    if (P[a](i, s) == 1.0) return i;
  }
  throw OracleError("next() on a stochastic transition column");
}

std::string TabularMDP::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "tabular-mdp v1\n";
  os << "states " << n << " actions " << m << " horizon " << horizon << "\n";
  os << "reward\n";
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < m; ++a) os << reward(s, a) << (a + 1 == m ? "" : " ");
    os << "\n";
  }
  for (int a = 0; a < m; ++a) {
    os << "P " << a << "\n";
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) os << P[a](i, j) << (j + 1 == n ? "" : " ");
      os << "\n";
    }
  }
  os << "initial\n";
  for (int s = 0; s < n; ++s) os << initial(s) << (s + 1 == n ? "" : " ");
  os << "\n";
  return os.str();
}

TabularMDP TabularMDP::from_text(const std::string& text) {
  std::istringstream is(text);
  std::string tag, version;
  is >> tag >> version;
  if (tag != "tabular-mdp" || version != "v1") throw OracleError("bad MDP header");
  TabularMDP mdp;
  std::string word;
  is >> word >> mdp.n >> word >> mdp.m >> word >> mdp.horizon;
  is >> word;  // "reward"
  mdp.reward = Mat(mdp.n, mdp.m);
  for (int s = 0; s < mdp.n; ++s)
    for (int a = 0; a < mdp.m; ++a) is >> mdp.reward(s, a);
  mdp.P.assign(mdp.m, Mat::Zero(mdp.n, mdp.n));
  for (int a = 0; a < mdp.m; ++a) {
    int idx = 0;
    is >> word >> idx;  // "P a"
    for (int i = 0; i < mdp.n; ++i)
      for (int j = 0; j < mdp.n; ++j) is >> mdp.P[idx](i, j);
  }
  is >> word;  // "initial"
  mdp.initial = Vec(mdp.n);
  for (int s = 0; s < mdp.n; ++s) is >> mdp.initial(s);
  if (!is) throw OracleError("truncated MDP text");
  return mdp;
}

ValueIterationResult value_iteration(const TabularMDP& mdp, double gamma, int horizon) {
  ValueIterationResult result;
  result.values = Vec::Zero(mdp.n);
  result.policy.assign(horizon, std::vector<int>(mdp.n, 0));

  for (int t = horizon - 1; t >= 0; --t) {
    Vec next_v(mdp.n);
    for (int s = 0; s < mdp.n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      int best_a = 0;
      for (int a = 0; a < mdp.m; ++a) {
        const double q = mdp.reward(s, a) + gamma * mdp.P[a].col(s).dot(result.values);
        if (q > best) {
          best = q;
          best_a = a;
        }
      }
      next_v(s) = best;
      result.policy[t][s] = best_a;
    }
    result.values = next_v;
  }
  return result;
}

double optimal_return(const TabularMDP& mdp, double gamma, int horizon) {
  return mdp.initial.dot(value_iteration(mdp, gamma, horizon).values);
}

namespace {

double brute_force_value(const TabularMDP& mdp, int s, double gamma, int horizon) {
  if (horizon == 0) return 0.0;
  double best = -std::numeric_limits<double>::infinity();
  for (int a = 0; a < mdp.m; ++a) {
    best = std::max(best, mdp.reward(s, a) +
                              gamma * brute_force_value(mdp, mdp.next(s, a), gamma, horizon - 1));
  }
  return best;
}

}  // namespace

double brute_force_optimal_return(const TabularMDP& mdp, double gamma, int horizon) {
  double total = 0.0;
  for (int s = 0; s < mdp.n; ++s) {
    if (mdp.initial(s) != 0.0) total += mdp.initial(s) * brute_force_value(mdp, s, gamma, horizon);
  }
  return total;
}

Mat policy_transition(const TabularMDP& mdp, const Mat& pi) {
  Mat Ppi = Mat::Zero(mdp.n, mdp.n);
  for (int a = 0; a < mdp.m; ++a) {
    Ppi += mdp.P[a] * pi.col(a).asDiagonal();
  }
  return Ppi;
}

Vec policy_reward(const TabularMDP& mdp, const Mat& pi) {
  Vec r = Vec::Zero(mdp.n);
  for (int s = 0; s < mdp.n; ++s) {
    for (int a = 0; a < mdp.m; ++a) r(s) += pi(s, a) * mdp.reward(s, a);
  }
  return r;
}

double expected_reward_between(const TabularMDP& mdp, const Mat& pi, const Vec& u, int steps,
                               double gamma) {
  const Mat Ppi = policy_transition(mdp, pi);
  const Vec Rpi = policy_reward(mdp, pi);
  Vec ut = u;
  double total = 0.0;
  double discount = 1.0;
  for (int t = 0; t < steps; ++t) {
    total += discount * ut.dot(Rpi);
    ut = Ppi * ut;
    discount *= gamma;
  }
  return total;
}

// --- Goal-space macros ---

MacroGoalSpace primitive_goal_space(const TabularMDP& mdp) {
  MacroGoalSpace goals;
  for (int a = 0; a < mdp.m; ++a) {
    goals.names.push_back("primitive:" + std::to_string(a));
    goals.plans.emplace_back(mdp.n, std::vector<int>{a});
  }
  return goals;
}

CoverageReport check_coverage(const TabularMDP& mdp, const MacroGoalSpace& goals) {
  CoverageReport report;
  for (int s = 0; s < mdp.n; ++s) {
    for (int a = 0; a < mdp.m; ++a) {
      const int target = mdp.next(s, a);
      const double r = mdp.reward(s, a);
      bool covered = false;
      for (int g = 0; g < goals.num_goals() && !covered; ++g) {
        const auto& seq = goals.plans[g][s];
        if (seq.size() != 1) continue;
        covered = mdp.next(s, seq[0]) == target && mdp.reward(s, seq[0]) == r;
      }
      if (!covered) report.uncovered.emplace_back(s, a);
    }
  }
  return report;
}

double hierarchical_optimal_return(const TabularMDP& mdp, const MacroGoalSpace& goals,
                                   double gamma, int horizon, bool require_coverage) {
  if (require_coverage) {
    const CoverageReport coverage = check_coverage(mdp, goals);
    if (!coverage.covered()) {
      std::ostringstream os;
      os << "goal space does not cover the action space; uncovered (state, action):";
      for (auto [s, a] : coverage.uncovered) os << " (" << s << "," << a << ")";
      throw OracleError(os.str());
    }
  }

  // V[t][s]: best return from s with a budget of t primitive steps, macro
  // rewards summed undiscounted and gamma applied once per macro decision.
  std::vector<Vec> V(horizon + 1, Vec::Zero(mdp.n));
  for (int t = 1; t <= horizon; ++t) {
    for (int s = 0; s < mdp.n; ++s) {
      double best = -std::numeric_limits<double>::infinity();
      for (int g = 0; g < goals.num_goals(); ++g) {
        const auto& seq = goals.plans[g][s];
        if (seq.empty()) continue;
        double macro_reward = 0.0;
        int state = s;
        int used = 0;
        for (int a : seq) {
          if (used == t) break;
          macro_reward += mdp.reward(state, a);
          state = mdp.next(state, a);
          ++used;
        }
        best = std::max(best, macro_reward + gamma * V[t - used](state));
      }
      if (goals.num_goals() > 0) V[t](s) = best;
    }
  }
  return mdp.initial.dot(V[horizon]);
}

// --- Bisimulation ---

std::vector<std::vector<int>> bisim_partition(const TabularMDP& mdp) {
  if (!mdp.is_deterministic())
    throw OracleError("bisim_partition requires deterministic transitions");

  std::vector<int> block(mdp.n, 0);
  int num_blocks = 1;

  while (true) {
    // Signature: per action, the exact reward and the successor's block.
    std::map<std::vector<double>, int> ids;
    std::vector<int> next_block(mdp.n);
    for (int s = 0; s < mdp.n; ++s) {
      std::vector<double> sig;
      sig.push_back(block[s]);
      for (int a = 0; a < mdp.m; ++a) {
        sig.push_back(mdp.reward(s, a));
        sig.push_back(block[mdp.next(s, a)]);
      }
      auto [it, inserted] = ids.emplace(std::move(sig), static_cast<int>(ids.size()));
      next_block[s] = it->second;
    }
    const int count = static_cast<int>(ids.size());
    block = std::move(next_block);
    if (count == num_blocks) break;
    num_blocks = count;
  }

  // Canonical form: renumber by first occurrence, then emit sorted members.
  std::map<int, int> renumber;
  std::vector<std::vector<int>> blocks;
  for (int s = 0; s < mdp.n; ++s) {
    auto [it, inserted] = renumber.emplace(block[s], static_cast<int>(blocks.size()));
    if (inserted) blocks.emplace_back();
    blocks[it->second].push_back(s);
  }
  return blocks;
}

// --- Gridworlds ---

TabularMDP Gridworld::to_mdp(int horizon) const {
  const int n = num_states();
  TabularMDP mdp;
  mdp.n = n;
  mdp.m = kNumPrimitiveActions;
  mdp.horizon = horizon;
  mdp.reward = Mat(n, mdp.m);
  mdp.P.assign(mdp.m, Mat::Zero(n, n));
  mdp.initial = Vec::Zero(n);
  mdp.initial(0) = 1.0;

  for (int s = 0; s < n; ++s) {
    const int cell = cell_of_state[s];
    const int r = cell / cols, c = cell % cols;
    for (int a = 0; a < mdp.m; ++a) {
      const auto action = static_cast<PrimitiveAction>(a);
      int target = s;
      bool legal_move = false;
      if (action != PrimitiveAction::Interact) {
        auto [dr, dc] = action_delta(action);
        const int nr = r + dr, nc = c + dc;
        if (nr >= 0 && nr < rows && nc >= 0 && nc < cols && !wall[nr * cols + nc]) {
          target = state_of_cell[nr * cols + nc];
          legal_move = true;
        }
      }
      mdp.P[a](target, s) = 1.0;
      mdp.reward(s, a) = legal_move ? move_reward(s, a) : stay_reward(s);
    }
  }
  return mdp;
}

MacroGoalSpace Gridworld::goal_space(int radius) const {
  const int W = 2 * radius + 1;
  FrameSemantics sem;
  sem.passable = {1, 0};      // code 0 floor, code 1 wall
  sem.interactable = {1, 0};  // Interact is permitted anywhere on the floor

  MacroGoalSpace goals;
  for (int kind = 0; kind < 2; ++kind) {
    for (int gr = 0; gr < W; ++gr) {
      for (int gc = 0; gc < W; ++gc) {
        goals.names.push_back("goal:" + std::to_string(gr) + "," + std::to_string(gc) + "," +
                              std::to_string(kind));
        goals.plans.emplace_back(num_states());
      }
    }
  }

  for (int s = 0; s < num_states(); ++s) {
    const int cell = cell_of_state[s];
    const int ar = cell / cols, ac = cell % cols;

    Observation obs;
    obs.mode = ObsMode::Egocentric;
    obs.window_size = W;
    obs.frame_rows = W;
    obs.frame_cols = W;
    obs.agent_row = radius;
    obs.agent_col = radius;
    obs.window.assign(static_cast<size_t>(W) * W, 1);
    for (int dr = -radius; dr <= radius; ++dr) {
      for (int dc = -radius; dc <= radius; ++dc) {
        const int r = ar + dr, c = ac + dc;
        if (r < 0 || r >= rows || c < 0 || c >= cols) continue;
        obs.window[(dr + radius) * W + (dc + radius)] = wall[r * cols + c] ? 1 : 0;
      }
    }

    const GoalMask mask = compute_mask(obs, sem);
    for (int kind = 0; kind < 2; ++kind) {
      for (int gr = 0; gr < W; ++gr) {
        for (int gc = 0; gc < W; ++gc) {
          const Goal goal{gr, gc, kind};
          const int flat = goal_flat_index(goal, W, W);
          if (!mask.valid(flat)) continue;
          std::vector<PrimitiveAction> seq = plan(obs, sem, goal);
          // Mirror the macro executor: an empty plan runs one Interact.
          if (seq.empty()) seq.push_back(PrimitiveAction::Interact);
          std::vector<int>& out = goals.plans[flat][s];
          out.reserve(seq.size());
          for (PrimitiveAction a : seq) out.push_back(static_cast<int>(a));
        }
      }
    }
  }
  return goals;
}

Gridworld random_gridworld(Rng& rng, int max_side, double wall_density) {
  Gridworld g;
  g.rows = rng.next_int(2, max_side);
  g.cols = rng.next_int(2, max_side);
  while (true) {
    g.wall.assign(static_cast<size_t>(g.rows) * g.cols, 0);
    for (char& w : g.wall) w = rng.next_bool(wall_density) ? 1 : 0;
    if (std::count(g.wall.begin(), g.wall.end(), 0) >= 2) break;
  }

  g.state_of_cell.assign(g.wall.size(), -1);
  g.cell_of_state.clear();
  for (size_t cell = 0; cell < g.wall.size(); ++cell) {
    if (g.wall[cell]) continue;
    g.state_of_cell[cell] = g.num_states();
    g.cell_of_state.push_back(static_cast<int>(cell));
  }

  const int n = g.num_states();
  g.move_reward = Mat(n, 4);
  g.stay_reward = Vec(n);
  for (int s = 0; s < n; ++s) {
    for (int a = 0; a < 4; ++a) g.move_reward(s, a) = rng.next_double();
    g.stay_reward(s) = rng.next_double();
  }
  return g;
}

}  // namespace dchrl::tabular
