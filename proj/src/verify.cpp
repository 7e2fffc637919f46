#include "dchrl/verify.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <iomanip>

#include "dchrl/abstraction.hpp"
#include "dchrl/grad_check.hpp"
#include "dchrl/hierarchy.hpp"
#include "dchrl/ppo.hpp"
#include "dchrl/tabular.hpp"

namespace dchrl {

namespace {

using Clock = std::chrono::steady_clock;

struct PropertyRunner {
  std::ostream& out;
  int failures = 0;

  void run(const std::string& name, const std::function<int()>& body) {
    const auto start = Clock::now();
    int checks = 0;
    std::string error;
    try {
      checks = body();
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - start).count();
    if (error.empty()) {
      out << "[PASS] " << name << " checks=" << checks << " time=" << std::fixed
          << std::setprecision(2) << secs << "s\n";
    } else {
      ++failures;
      out << "[FAIL] " << name << ": " << error << "\n";
    }
  }
};

struct CheckFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void require(bool cond, const std::string& message) {
  if (!cond) throw CheckFailure(message);
}

tabular::TabularMDP crafted_six_state() {
  using namespace tabular;
  TabularMDP mdp;
  mdp.n = 6;
  mdp.m = 2;
  mdp.reward = Mat(6, 2);
  mdp.P.assign(2, Mat::Zero(6, 6));
  const int next[6][2] = {{2, 4}, {2, 4}, {4, 0}, {4, 0}, {0, 2}, {0, 2}};
  const double reward[6][2] = {{1.0, 0.0}, {1.0, 0.0}, {2.0, 0.5},
                               {2.0, 0.5}, {1.0, 0.0}, {1.0, 0.0}};
  for (int s = 0; s < 6; ++s) {
    for (int a = 0; a < 2; ++a) {
      mdp.P[a](next[s][a], s) = 1.0;
      mdp.reward(s, a) = reward[s][a];
    }
  }
  mdp.initial = Vec::Zero(6);
  mdp.initial(0) = 1.0;
  mdp.horizon = 24;
  return mdp;
}

}  // namespace

int run_verify_suite(std::ostream& out, const VerifyOptions& options) {
  PropertyRunner runner{out};

  runner.run("value-iteration-vs-brute-force", [&]() {
    Rng rng(options.seed + 1);
    int checks = 0;
    for (int trial = 0; trial < 10; ++trial) {
      tabular::Gridworld world = tabular::random_gridworld(rng, 3);
      tabular::TabularMDP mdp = world.to_mdp(5);
      for (double gamma : {1.0, 0.9}) {
        const double vi = tabular::optimal_return(mdp, gamma, 5);
        const double brute = tabular::brute_force_optimal_return(mdp, gamma, 5);
        require(std::abs(vi - brute) < 1e-10, "value iteration disagrees with enumeration");
        ++checks;
      }
    }
    return checks;
  });

  runner.run("appendix-equality-gamma1", [&]() {
    Rng rng(options.seed + 2);
    int checks = 0;
    for (int trial = 0; trial < options.gridworlds; ++trial) {
      tabular::Gridworld world = tabular::random_gridworld(rng);
      const int horizon = 4 * world.num_states();
      tabular::TabularMDP mdp = world.to_mdp(horizon);
      const tabular::MacroGoalSpace goals = world.goal_space(2);
      require(tabular::check_coverage(mdp, goals).covered(), "coverage violated");
      const double flat = tabular::optimal_return(mdp, 1.0, horizon);
      const double hier = tabular::hierarchical_optimal_return(mdp, goals, 1.0, horizon);
      require(std::abs(flat - hier) < 1e-9, "hierarchical return differs from flat optimum");
      ++checks;
    }
    return checks;
  });

  runner.run("appendix-counterexample-non-covering", [&]() {
    using namespace tabular;
    TabularMDP mdp;
    mdp.n = 2;
    mdp.m = 5;
    mdp.reward = Mat::Zero(2, 5);
    mdp.P.assign(5, Mat::Zero(2, 2));
    const int next[2][5] = {{0, 1, 0, 1, 0}, {1, 1, 0, 1, 1}};
    for (int s = 0; s < 2; ++s)
      for (int a = 0; a < 5; ++a) mdp.P[a](next[s][a], s) = 1.0;
    mdp.reward(0, 3) = 10.0;
    mdp.initial = Vec::Zero(2);
    mdp.initial(0) = 1.0;
    mdp.horizon = 4;

    MacroGoalSpace crippled;
    crippled.names = {"left", "interact"};
    crippled.plans = {{{2}, {2}}, {{4}, {4}}};
    require(!check_coverage(mdp, crippled).covered(), "coverage unexpectedly holds");
    const double flat = optimal_return(mdp, 1.0, 4);
    const double hier = hierarchical_optimal_return(mdp, crippled, 1.0, 4, false);
    require(hier < flat - 1.0, "strict gap missing for the non-covering goal space");
    return 2;
  });

  runner.run("coverage-fault-injection", [&]() {
    Rng rng(options.seed + 3);
    tabular::Gridworld world = tabular::random_gridworld(rng, 4, 0.0);
    tabular::TabularMDP mdp = world.to_mdp(8);
    tabular::MacroGoalSpace goals = tabular::primitive_goal_space(mdp);
    // Remove the macro realizing Up; the report must name Up at some state.
    goals.names.erase(goals.names.begin());
    goals.plans.erase(goals.plans.begin());
    const tabular::CoverageReport report = tabular::check_coverage(mdp, goals);
    require(!report.covered(), "fault not detected");
    bool names_up = false;
    for (auto [s, a] : report.uncovered) names_up |= (a == 0);
    require(names_up, "uncovered report does not name the Up action");
    bool threw = false;
    try {
      tabular::hierarchical_optimal_return(mdp, goals, 1.0, 8);
    } catch (const tabular::OracleError&) {
      threw = true;
    }
    require(threw, "hierarchical return accepted a non-covering goal space");
    return 3;
  });

  runner.run("trajectory-decomposition-identity", [&]() {
    Rng rng(options.seed + 4);
    tabular::Gridworld world = tabular::random_gridworld(rng, 4);
    tabular::TabularMDP mdp = world.to_mdp(10);
    tabular::Mat pi(mdp.n, mdp.m);
    for (int s = 0; s < mdp.n; ++s) {
      double total = 0.0;
      for (int a = 0; a < mdp.m; ++a) {
        pi(s, a) = rng.next_double(0.1, 1.0);
        total += pi(s, a);
      }
      for (int a = 0; a < mdp.m; ++a) pi(s, a) /= total;
    }
    int checks = 0;
    for (double gamma : {1.0, 0.9}) {
      const int total_steps = 8;
      const double whole =
          tabular::expected_reward_between(mdp, pi, mdp.initial, total_steps, gamma);
      const tabular::Mat Ppi = tabular::policy_transition(mdp, pi);
      for (int m = 0; m <= total_steps; ++m) {
        tabular::Vec um = mdp.initial;
        for (int t = 0; t < m; ++t) um = Ppi * um;
        const double split =
            tabular::expected_reward_between(mdp, pi, mdp.initial, m, gamma) +
            std::pow(gamma, m) *
                tabular::expected_reward_between(mdp, pi, um, total_steps - m, gamma);
        require(std::abs(whole - split) < 1e-12, "decomposition identity violated");
        ++checks;
      }
    }
    return checks;
  });

  runner.run("bisim-partition-crafted-and-stable", [&]() {
    tabular::TabularMDP mdp = crafted_six_state();
    const auto blocks = tabular::bisim_partition(mdp);
    require(blocks.size() == 3, "expected 3 blocks");
    require(blocks[0] == std::vector<int>{0, 1} && blocks[1] == std::vector<int>{2, 3} &&
                blocks[2] == std::vector<int>{4, 5},
            "wrong block structure");
    require(tabular::bisim_partition(mdp) == blocks, "refinement not idempotent");

    tabular::TabularMDP stochastic;
    stochastic.n = 2;
    stochastic.m = 1;
    stochastic.reward = tabular::Mat::Zero(2, 1);
    stochastic.P.assign(1, tabular::Mat::Zero(2, 2));
    stochastic.P[0](0, 0) = 0.5;
    stochastic.P[0](1, 0) = 0.5;
    stochastic.P[0](0, 1) = 1.0;
    stochastic.initial = tabular::Vec::Zero(2);
    stochastic.initial(0) = 1.0;
    bool threw = false;
    try {
      tabular::bisim_partition(stochastic);
    } catch (const tabular::OracleError&) {
      threw = true;
    }
    require(threw, "stochastic MDP accepted");
    return 3;
  });

  runner.run("bisim-toy-exact-zero-loss", [&]() {
    nn::ParamStore store;
    abstraction::AbstractionSpec spec;
    spec.recurrent = false;
    spec.input_dim = 3;
    spec.z_dim = 2;
    spec.dense_hidden = {};
    spec.head_hidden = {};
    spec.action_dim = 2;
    Rng rng(options.seed + 5);
    abstraction::Abstraction abs(spec, store, rng);

    nn::Mat enc(2, 3);
    enc << 1, 1, 0, 0, 0, 1;
    store.value("abs/enc/l0/W") = enc;
    store.value("abs/enc/l0/b").setZero();
    nn::Mat rw(1, 4);
    rw << 1.0, 0.0, 0.5, -0.5;
    store.value("abs/r/l0/W") = rw;
    store.value("abs/r/l0/b").setZero();
    nn::Mat pw(2, 4);
    pw << 0, 1, 0, 0, 1, 0, 0, 0;
    store.value("abs/p/l0/W") = pw;
    store.value("abs/p/l0/b").setZero();

    std::vector<abstraction::AbsTuple> tuples;
    const double block_reward[3] = {1.0, 1.0, 0.0};
    const int next_state[3] = {2, 2, 0};
    for (int s = 0; s < 3; ++s) {
      for (int a = 0; a < 2; ++a) {
        abstraction::AbsTuple t;
        t.h.dense = Eigen::VectorXd::Zero(3);
        t.h.dense(s) = 1.0;
        t.h_next.dense = Eigen::VectorXd::Zero(3);
        t.h_next.dense(next_state[s]) = 1.0;
        t.action = {a == 0 ? 1.0 : 0.0, a == 1 ? 1.0 : 0.0};
        t.reward = block_reward[s] + (a == 0 ? 0.5 : -0.5);
        tuples.push_back(std::move(t));
      }
    }
    std::vector<const abstraction::AbsTuple*> batch;
    for (auto& t : tuples) batch.push_back(&t);
    nn::Tape tape(false);
    nn::ParamBinder bind(tape, store);
    const double loss = tape.val(abs.bisim_loss(tape, bind, batch, 1.0))(0, 0);
    require(loss == 0.0, "toy loss is not exactly zero");
    return 1;
  });

  runner.run("gradcheck-mlp", [&]() {
    Rng rng(options.seed + 6);
    int checks = 0;
    for (int point = 0; point < options.grad_points; ++point) {
      nn::ParamStore store;
      nn::MlpSpec spec{4, {6}, 3, nn::MlpSpec::Act::Tanh};
      nn::init_mlp(store, "net", spec, rng);
      nn::Mat x = nn::Mat::Random(4, 3);
      auto report = nn::check_gradients(store, [&](nn::Tape& t, nn::ParamBinder& b) {
        return t.mean_all(t.sum_squares(nn::mlp_forward(t, b, "net", spec, t.constant(x))));
      });
      require(report.max_rel_err < 1e-4, "mlp gradient mismatch at " + report.worst_param);
      checks += report.coords_checked;
    }
    return checks;
  });

  runner.run("gradcheck-lstm", [&]() {
    Rng rng(options.seed + 7);
    int checks = 0;
    for (int point = 0; point < std::max(1, options.grad_points / 2); ++point) {
      nn::ParamStore store;
      nn::LstmSpec spec{3, 4};
      nn::init_lstm(store, "lstm", spec, rng);
      std::vector<nn::Mat> seq;
      for (int t = 0; t < 4; ++t) seq.push_back(nn::Mat::Random(3, 2));
      auto report = nn::check_gradients(store, [&](nn::Tape& t, nn::ParamBinder& b) {
        std::vector<nn::Value> xs;
        std::vector<nn::RowVec> valid;
        for (const auto& x : seq) {
          xs.push_back(t.constant(x));
          valid.push_back(nn::RowVec::Ones(2));
        }
        return t.mean_all(t.sum_squares(nn::lstm_forward(t, b, "lstm", spec, xs, valid)));
      });
      require(report.max_rel_err < 1e-4, "lstm gradient mismatch at " + report.worst_param);
      checks += report.coords_checked;
    }
    return checks;
  });

  runner.run("gradcheck-bisim-loss", [&]() {
    Rng rng(options.seed + 8);
    int checks = 0;
    for (int point = 0; point < std::max(1, options.grad_points / 2); ++point) {
      nn::ParamStore store;
      abstraction::AbstractionSpec spec;
      spec.recurrent = true;
      spec.hist = abstraction::HistorySpec{2, 4, 3};
      spec.z_dim = 3;
      spec.lstm_hidden = 5;
      spec.head_hidden = {5};
      abstraction::Abstraction abs(spec, store, rng);

      std::vector<abstraction::AbsTuple> tuples(3);
      for (auto& t : tuples) {
        t.h.hist = nn::Mat::Random(7, 3);
        t.h.valid = {1.0, 1.0, 1.0};
        t.h_next.hist = nn::Mat::Random(7, 3);
        t.h_next.valid = {1.0, 1.0, 1.0};
        t.action = {0.5, 0.5, 1.0};
        t.reward = rng.next_double(-1.0, 1.0);
      }
      std::vector<const abstraction::AbsTuple*> batch;
      for (auto& t : tuples) batch.push_back(&t);
      const nn::Mat targets = abs.successor_targets(store, batch);
      auto report = nn::check_gradients(store, [&](nn::Tape& t, nn::ParamBinder& b) {
        return abs.bisim_loss(t, b, batch, 0.7, &targets);
      });
      require(report.max_rel_err < 1e-4, "bisim gradient mismatch at " + report.worst_param);
      checks += report.coords_checked;
    }
    return checks;
  });

  runner.run("gradcheck-ppo-loss", [&]() {
    Rng rng(options.seed + 9);
    int checks = 0;
    for (int point = 0; point < std::max(1, options.grad_points / 2); ++point) {
      nn::ParamStore store;
      ppo::PolicySpec spec;
      spec.input_dim = 4;
      spec.num_actions = 6;
      spec.pi_hidden = {6};
      spec.v_hidden = {6};
      ppo::PolicyValueNet net(spec, "net", store, rng);

      const int B = 4;
      std::vector<ppo::PolicyInput> inputs(B);
      std::vector<int> actions(B);
      nn::Mat mask = nn::Mat::Zero(6, B), adv(1, B), old_logp(1, B), returns(1, B);
      for (int j = 0; j < B; ++j) {
        inputs[j].dense = Eigen::VectorXd::Random(4);
        for (int i = 0; i < 6; ++i) mask(i, j) = (i % (j + 2) == 0) ? 1.0 : 0.0;
        mask(j, j) = 1.0;
        actions[j] = j;
        adv(0, j) = rng.next_double(-1.0, 1.0);
        old_logp(0, j) = rng.next_double(-2.0, -0.5);
        returns(0, j) = rng.next_double(-1.0, 1.0);
      }
      auto report = nn::check_gradients(store, [&](nn::Tape& t, nn::ParamBinder& b) {
        std::vector<const ppo::PolicyInput*> ptrs;
        for (const auto& in : inputs) ptrs.push_back(&in);
        auto [logits, values] = net.forward(t, b, ptrs);
        nn::Value logp_full = t.masked_log_softmax(logits, mask);
        nn::Value lp = t.gather_columns(logp_full, actions);
        nn::Value ratio = t.exp_(t.sub(lp, t.constant(old_logp)));
        nn::Value adv_c = t.constant(adv);
        nn::Value surr = t.min_(t.mul(ratio, adv_c), t.mul(t.clamp(ratio, 0.8, 1.2), adv_c));
        nn::Value pl = t.scale(t.mean_all(surr), -1.0);
        nn::Value vl = t.scale(t.sum_squares(t.sub(values, t.constant(returns))), 1.0 / B);
        nn::Value probs = t.exp_(logp_full);
        nn::Value ent = t.scale(t.scale(t.sum(t.mul(probs, logp_full)), -1.0), 1.0 / B);
        return t.sub(t.add(pl, t.scale(vl, 0.5)), t.scale(ent, 0.01));
      });
      require(report.max_rel_err < 1e-4, "ppo gradient mismatch at " + report.worst_param);
      checks += report.coords_checked;
    }
    return checks;
  });

  runner.run("planner-optimality-and-mask", [&]() {
    Rng rng(options.seed + 10);
    FrameSemantics sem;
    sem.passable = {1, 0, 0, 1};
    sem.interactable = {0, 0, 1, 1};
    int checks = 0;

    for (int trial = 0; trial < options.windows; ++trial) {
      const int W = trial % 2 == 0 ? 5 : 7;
      Observation obs;
      obs.mode = ObsMode::Egocentric;
      obs.window_size = W;
      obs.frame_rows = W;
      obs.frame_cols = W;
      obs.agent_row = W / 2;
      obs.agent_col = W / 2;
      obs.window.assign(static_cast<size_t>(W) * W, 0);
      const double density = rng.next_double(0.1, 0.45);
      for (int& c : obs.window) {
        const double u = rng.next_double();
        c = u < density ? 1 : (u < density + 0.1 ? 2 : (u < density + 0.2 ? 3 : 0));
      }
      obs.window[(W / 2) * W + W / 2] = 0;

      // Relaxation-sweep distances as the independent oracle.
      const int n = W * W;
      std::vector<int> dist(n, 1 << 20);
      dist[(W / 2) * W + W / 2] = 0;
      for (int sweep = 0; sweep < n; ++sweep) {
        for (int r = 0; r < W; ++r) {
          for (int c = 0; c < W; ++c) {
            const int here = dist[r * W + c];
            if (here >= (1 << 20)) continue;
            const int dr[4] = {-1, 1, 0, 0}, dcol[4] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
              const int nr = r + dr[k], nc = c + dcol[k];
              if (nr < 0 || nr >= W || nc < 0 || nc >= W) continue;
              if (!sem.is_passable(obs.code_at(nr, nc))) continue;
              dist[nr * W + nc] = std::min(dist[nr * W + nc], here + 1);
            }
          }
        }
      }

      const GoalMask mask = compute_mask(obs, sem);
      for (int kind = 0; kind < 2; ++kind) {
        for (int r = 0; r < W; ++r) {
          for (int c = 0; c < W; ++c) {
            const Goal g{r, c, kind};
            const bool own = kind == 0 && r == W / 2 && c == W / 2;
            int best = 1 << 20;
            if (kind == 0) {
              best = sem.is_passable(obs.code_at(r, c)) ? dist[r * W + c] : (1 << 20);
            } else if (sem.is_interactable(obs.code_at(r, c))) {
              if (sem.is_passable(obs.code_at(r, c))) {
                best = dist[r * W + c];
              } else {
                const int dr[4] = {-1, 1, 0, 0}, dcol[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                  const int nr = r + dr[k], nc = c + dcol[k];
                  if (nr < 0 || nr >= W || nc < 0 || nc >= W) continue;
                  if (!sem.is_passable(obs.code_at(nr, nc))) continue;
                  best = std::min(best, dist[nr * W + nc]);
                }
              }
            }
            const bool expect = own || ((kind == 0 ? sem.is_passable(obs.code_at(r, c))
                                                   : sem.is_interactable(obs.code_at(r, c))) &&
                                        best < (1 << 20));
            require(mask.valid(goal_flat_index(g, W, W)) == expect, "mask mismatch");
            ++checks;
            if (!expect) continue;
            const auto p = plan(obs, sem, g);
            const int moves = static_cast<int>(p.size()) - (kind == 1 ? 1 : 0);
            require(moves == best, "plan length not optimal");
          }
        }
      }
    }
    return checks;
  });

  runner.run("gae-recursion-vs-direct-sum", [&]() {
    Rng rng(options.seed + 11);
    int checks = 0;
    for (int trial = 0; trial < 100; ++trial) {
      const size_t n = 20;
      std::vector<double> rewards(n), values(n);
      std::vector<char> dones(n, 0);
      for (size_t i = 0; i < n; ++i) {
        rewards[i] = rng.next_double(-2.0, 2.0);
        values[i] = rng.next_double(-1.0, 1.0);
        dones[i] = rng.next_bool(0.15);
      }
      const double bootstrap = rng.next_double(-1.0, 1.0);
      const auto fast = ppo::gae(rewards, values, dones, bootstrap, 0.997, 0.95);
      // Direct summation of discounted deltas.
      for (size_t t = 0; t < n; ++t) {
        double acc = 0.0, weight = 1.0;
        for (size_t k = t; k < n; ++k) {
          const double next_v = k + 1 < n ? values[k + 1] : bootstrap;
          acc += weight *
                 (rewards[k] + 0.997 * next_v * (dones[k] ? 0.0 : 1.0) - values[k]);
          if (dones[k]) break;
          weight *= 0.997 * 0.95;
        }
        require(std::abs(fast[t] - acc) < 1e-12, "gae mismatch");
        ++checks;
      }
    }
    return checks;
  });

  runner.run("masked-sampling-excludes-invalid", [&]() {
    Rng rng(options.seed + 12);
    std::vector<double> logits(20);
    for (double& l : logits) l = rng.next_double(-2.0, 2.0);
    std::vector<char> mask(20, 0);
    mask[1] = mask[5] = mask[17] = 1;
    const auto probs = ppo::masked_softmax(logits, mask);
    for (size_t i = 0; i < probs.size(); ++i) {
      if (!mask[i]) require(probs[i] == 0.0, "invalid probability not exactly zero");
    }
    for (int i = 0; i < 100000; ++i) {
      require(mask[ppo::masked_sample(logits, mask, rng).index] == 1, "sampled invalid goal");
    }
    return 100000;
  });

  return runner.failures;
}

}  // namespace dchrl
