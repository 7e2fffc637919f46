#include "dchrl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "dchrl/doorkey.hpp"
#include "dchrl/multi_item.hpp"

namespace dchrl {

namespace fs = std::filesystem;

std::unique_ptr<Env> make_env(const ExperimentConfig& cfg) {
  if (cfg.env == "doorkey") {
    DoorKeyConfig dk;
    dk.grid_size = cfg.grid_size;
    dk.window = cfg.window;
    dk.num_keys = cfg.num_keys;
    dk.max_steps = cfg.resolved_max_steps();
    return std::make_unique<DoorKeyEnv>(dk);
  }
  if (cfg.env == "multiitem") {
    MultiItemConfig mi;
    mi.grid_size = cfg.grid_size;
    mi.num_item_types = cfg.num_item_types;
    mi.total_items = cfg.total_items;
    mi.group_size = cfg.group_size;
    mi.window = cfg.window;
    mi.max_steps = cfg.resolved_max_steps();
    mi.mode = cfg.mode;
    mi.layout_seed = cfg.layout_seed;
    mi.penalty_divisor = cfg.penalty_divisor;
    mi.penalty_counts_groups = cfg.penalty_counts_groups;
    return std::make_unique<MultiItemEnv>(mi);
  }
  throw ConfigError("unknown env: " + cfg.env);
}

// --- Agent assembly ---

ppo::PolicyInput Agent::build_input(const Observation& obs,
                                    const abstraction::HistorySequence* hist) {
  ppo::PolicyInput input;
  if (cfg.method == Method::DcHRLSA) {
    if (pomdp()) {
      input.dense = abs->encode(store, *hist);
    } else {
      const std::vector<double> f = observation_features(obs, num_codes);
      input.dense = abs->encode_dense(
          store, Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size())));
    }
    return input;
  }
  if (policy_recurrent()) {
    input.hist = hist->features();
    input.valid = hist->validity();
    return input;
  }
  const std::vector<double> f = observation_features(obs, num_codes);
  input.dense = Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
  return input;
}

std::vector<char> Agent::build_mask(const Env& env, const Observation& obs) const {
  if (!hierarchical()) return std::vector<char>(kNumPrimitiveActions, 1);
  return compute_mask(obs, env.semantics()).bits;
}

std::vector<double> Agent::action_features(int action_index) const {
  if (!hierarchical()) {
    return {static_cast<double>(action_index) / (kNumPrimitiveActions - 1), 0.0, 0.0};
  }
  return goal_features(goal_from_flat(action_index, frame_rows, frame_cols), frame_rows,
                       frame_cols);
}

Agent make_agent(const ExperimentConfig& cfg, uint64_t seed) {
  cfg.validate();
  Agent agent;
  agent.cfg = cfg;

  std::unique_ptr<Env> probe = make_env(cfg);
  Observation obs = probe->reset(0);
  agent.num_codes = probe->num_codes();
  agent.frame_rows = obs.frame_rows;
  agent.frame_cols = obs.frame_cols;
  agent.obs_feat_dim = static_cast<int>(observation_features(obs, agent.num_codes).size());
  agent.num_actions = agent.hierarchical() ? 2 * agent.frame_rows * agent.frame_cols
                                           : kNumPrimitiveActions;
  agent.hist_spec = abstraction::HistorySpec{
      cfg.history_l, agent.obs_feat_dim, cfg.include_goals_in_history ? 3 : 0};

  Rng init = Rng(seed).fork("init");

  if (cfg.method == Method::DcHRLSA) {
    abstraction::AbstractionSpec spec;
    spec.recurrent = agent.pomdp();
    spec.hist = agent.hist_spec;
    spec.input_dim = agent.obs_feat_dim;
    spec.z_dim = cfg.resolved_dim_z();
    spec.lstm_hidden = cfg.lstm_hidden;
    spec.dense_hidden = {cfg.encoder_hidden};
    spec.head_hidden = {cfg.head_hidden};
    spec.action_dim = 3;
    spec.lambda = cfg.lambda_bisim;
    spec.batch_size = cfg.bs_abs;
    spec.train_freq = cfg.tf;
    spec.buffer_capacity = static_cast<size_t>(cfg.buffer_capacity);
    spec.lr = cfg.lr;
    spec.augment = cfg.augment && agent.pomdp();
    spec.window_w = cfg.window;
    spec.wall_value = 1.0 / agent.num_codes;  // Wall code is 1 in both environments
    agent.abs = std::make_unique<abstraction::Abstraction>(spec, agent.store, init);
  }

  ppo::PolicySpec pspec;
  pspec.recurrent = agent.policy_recurrent();
  pspec.input_dim = cfg.method == Method::DcHRLSA ? cfg.resolved_dim_z()
                    : pspec.recurrent            ? agent.hist_spec.step_dim()
                                                 : agent.obs_feat_dim;
  pspec.steps = agent.hist_spec.steps();
  pspec.lstm_hidden = cfg.lstm_hidden;
  pspec.pi_hidden = {cfg.policy_hidden, cfg.policy_hidden};
  pspec.v_hidden = {cfg.policy_hidden, cfg.policy_hidden};
  pspec.num_actions = agent.num_actions;
  agent.net = std::make_unique<ppo::PolicyValueNet>(pspec, "policy", agent.store, init);
  return agent;
}

std::map<std::string, std::string> agent_fingerprint(const Agent& agent) {
  const ExperimentConfig& cfg = agent.cfg;
  return {
      {"format", "dchrl-checkpoint"},
      {"env", cfg.env},
      {"mode", cfg.mode == ObsMode::FullMap ? "mdp" : "pomdp"},
      {"method", method_name(cfg.method)},
      {"grid_size", std::to_string(cfg.grid_size)},
      {"window", std::to_string(cfg.window)},
      {"num_actions", std::to_string(agent.num_actions)},
      {"obs_feat_dim", std::to_string(agent.obs_feat_dim)},
      {"dim_z", std::to_string(cfg.resolved_dim_z())},
      {"l", std::to_string(cfg.history_l)},
      {"include_goals", cfg.include_goals_in_history ? "1" : "0"},
      {"lstm_hidden", std::to_string(cfg.lstm_hidden)},
      {"policy_hidden", std::to_string(cfg.policy_hidden)},
      {"encoder_hidden", std::to_string(cfg.encoder_hidden)},
      {"head_hidden", std::to_string(cfg.head_hidden)},
  };
}

void check_fingerprint(const Agent& agent, const std::map<std::string, std::string>& meta) {
  for (const auto& [key, value] : agent_fingerprint(agent)) {
    auto it = meta.find(key);
    if (it == meta.end() || it->second != value) {
      throw ConfigError("checkpoint incompatible with config: key '" + key + "' is '" +
                        (it == meta.end() ? std::string("<missing>") : it->second) +
                        "', expected '" + value + "'");
    }
  }
}

// --- Shared episode driving ---

namespace {

struct EpisodeState {
  Observation obs;
  abstraction::HistorySequence hist;
  double score = 0.0;
  int steps = 0;

  explicit EpisodeState(const abstraction::HistorySpec& spec) : hist(spec) {}
};

void start_episode(Agent& agent, Env& env, EpisodeState& ep, uint64_t env_seed,
                   bool feed_abstraction) {
  ep.obs = env.reset(env_seed);
  ep.score = 0.0;
  ep.steps = 0;
  const std::vector<double> f = observation_features(ep.obs, agent.num_codes);
  ep.hist.reset(f);
  if (feed_abstraction && agent.abs) agent.abs->begin_episode(f);
}

struct ActResult {
  double reward = 0.0;
  int duration = 0;
  bool done = false;
  std::string events;
  std::vector<StepOutcome> step_log;
};

ActResult act(Agent& agent, Env& env, EpisodeState& ep, int action_index, bool want_step_log) {
  ActResult result;
  std::vector<StepOutcome>* log = want_step_log ? &result.step_log : nullptr;
  if (agent.hierarchical()) {
    const Goal goal = goal_from_flat(action_index, agent.frame_rows, agent.frame_cols);
    MacroTransition macro = execute_macro(env, ep.obs, goal, log);
    result.reward = macro.accumulated_reward;
    result.duration = macro.duration;
    result.done = macro.done;
    result.events = macro.events;
    // Episode score accumulates per primitive step so it equals a
    // left-to-right re-sum of the trajectory log exactly.
    for (double r : macro.step_rewards) ep.score += r;
    ep.obs = std::move(macro.next_obs);
  } else {
    StepOutcome out = env.step(static_cast<PrimitiveAction>(action_index));
    if (log) log->push_back(out);
    result.reward = out.reward;
    result.duration = 1;
    result.done = out.done;
    result.events = out.info.events;
    ep.score += out.reward;
    ep.obs = std::move(out.observation);
  }

  const std::vector<double> f = observation_features(ep.obs, agent.num_codes);
  ep.hist.advance(agent.action_features(action_index), f);
  ep.steps += result.duration;
  return result;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return 0.0;
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return std::sqrt(v / static_cast<double>(xs.size()));
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

// Exact round-trip formatting for per-step and per-episode rewards, so score
// identities (episode return == sum of logged step rewards) hold exactly.
std::string fmt_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

// --- Evaluation ---

EvalSummary evaluate(Agent& agent, uint64_t seed, int episodes) {
  EvalSummary summary;
  if (episodes <= 0) return summary;

  std::unique_ptr<Env> env = make_env(agent.cfg);
  Rng root(seed);
  std::vector<double> scores, steps;

  for (int e = 0; e < episodes; ++e) {
    EpisodeState ep(agent.hist_spec);
    start_episode(agent, *env, ep, root.fork("eval_episode", e).next_u64(), false);
    while (true) {
      const std::vector<char> mask = agent.build_mask(*env, ep.obs);
      ppo::PolicyInput input = agent.build_input(ep.obs, &ep.hist);
      auto [logits, value] = agent.net->forward_one(agent.store, input);
      (void)value;
      std::vector<double> lv(logits.data(), logits.data() + logits.size());
      const int action = ppo::masked_argmax(lv, mask);
      if (act(agent, *env, ep, action, false).done) break;
    }
    scores.push_back(ep.score);
    steps.push_back(ep.steps);
  }

  summary.episodes = episodes;
  summary.score_mean = mean_of(scores);
  summary.score_std = std_of(scores);
  summary.steps_mean = mean_of(steps);
  return summary;
}

// --- Training ---

TrainResult train_single(const ExperimentConfig& cfg, uint64_t seed, const std::string& run_dir,
                         const std::string& resume_ckpt) {
  cfg.validate();
  Agent agent = make_agent(cfg, seed);

  long long env_steps = 0;
  uint64_t episode_counter = 0;
  int update_idx = 0;

  if (!resume_ckpt.empty()) {
    std::map<std::string, std::string> meta;
    nn::ParamStore loaded = nn::load_checkpoint(resume_ckpt, &meta);
    check_fingerprint(agent, meta);
    agent.store = std::move(loaded);
    if (meta.count("env_steps")) env_steps = std::stoll(meta.at("env_steps"));
    if (meta.count("episodes")) episode_counter = std::stoull(meta.at("episodes"));
    if (meta.count("update_idx")) update_idx = std::stoi(meta.at("update_idx"));
  }

  fs::create_directories(run_dir);
  const bool is_multiitem = cfg.env == "multiitem";
  const bool sa = cfg.method == Method::DcHRLSA;

  // Manifest: resolved config + run identity. Outputs are reconstructible
  // from this file plus the checkpoints.
  {
    std::ofstream manifest(run_dir + "/manifest.txt");
    manifest << "# dchrl run manifest\n" << cfg.to_text();
    manifest << "run_seed=" << seed << "\n";
    manifest << "code_version=dchrl-1\n";
    manifest << "start_time=" << std::time(nullptr) << "\n";
    manifest << "training_log=training_log.csv\n";
    manifest << "eval_log=eval_log.csv\n";
    manifest << "episodes_log=episodes.csv\n";
    if (cfg.log_trajectories) {
      manifest << "trajectory_log=trajectories.csv\n";
      if (agent.hierarchical()) manifest << "macro_log=macros.csv\n";
    }
  }

  std::ofstream train_log(run_dir + "/training_log.csv");
  train_log << "update,env_steps,mean_episode_score,mean_episode_steps,policy_loss,value_loss,"
               "entropy,clip_fraction";
  if (sa) train_log << ",bisim_loss";
  train_log << "\n";

  std::ofstream eval_log(run_dir + "/eval_log.csv");
  eval_log << "update,env_steps,eval_score_mean,eval_score_std,eval_steps_mean\n";

  std::ofstream episode_log(run_dir + "/episodes.csv");
  episode_log << (is_multiitem ? "episode,score,total_steps,submit_number\n"
                               : "episode,score,total_steps\n");

  std::ofstream traj_log, macro_log;
  if (cfg.log_trajectories) {
    traj_log.open(run_dir + "/trajectories.csv");
    traj_log << "episode_id,step,action_code,reward,done,event_tags\n";
    if (agent.hierarchical()) {
      macro_log.open(run_dir + "/macros.csv");
      macro_log << "decision_index,goal_flat_index,duration,accumulated_reward,mask_cardinality\n";
    }
  }

  std::unique_ptr<Env> env = make_env(cfg);
  Rng root(seed);

  ppo::PpoConfig ppo_cfg;
  ppo_cfg.lr = cfg.lr;
  ppo_cfg.gamma = cfg.gamma;
  ppo_cfg.gae_lambda = cfg.lambda_gae;
  ppo_cfg.clip_eps = cfg.epsilon;
  ppo_cfg.minibatch = cfg.bs;
  ppo_cfg.epochs = cfg.epochs;
  ppo_cfg.ent_coef = cfg.ent_coef;
  ppo_cfg.vf_coef = cfg.vf_coef;
  ppo_cfg.grad_clip = cfg.grad_clip;
  ppo_cfg.smdp_discount = cfg.smdp_discount;

  TrainResult result;
  result.run_dir = run_dir;
  std::vector<double> all_scores, all_steps;
  double last_mean_score = 0.0, last_mean_steps = 0.0;
  long long decision_counter = 0;

  EpisodeState ep(agent.hist_spec);
  start_episode(agent, *env, ep, root.fork("episode", episode_counter).next_u64(), sa);

  auto save_ckpt = [&](const std::string& name) {
    auto meta = agent_fingerprint(agent);
    meta["env_steps"] = std::to_string(env_steps);
    meta["episodes"] = std::to_string(episode_counter);
    meta["update_idx"] = std::to_string(update_idx);
    nn::save_checkpoint(run_dir + "/" + name, agent.store, meta);
  };

  while (env_steps < cfg.budget) {
    Rng sample_rng = root.fork("sample", update_idx);
    ppo::Rollout rollout;
    std::vector<double> rollout_scores, rollout_steps;

    while (static_cast<int>(rollout.decisions.size()) < cfg.rollout && env_steps < cfg.budget) {
      ppo::Decision d;
      d.mask = agent.build_mask(*env, ep.obs);
      d.input = agent.build_input(ep.obs, &ep.hist);
      auto [logits, value] = agent.net->forward_one(agent.store, d.input);
      std::vector<double> lv(logits.data(), logits.data() + logits.size());
      const ppo::SampleResult s = ppo::masked_sample(lv, d.mask, sample_rng);
      d.action = s.index;
      d.log_prob = s.log_prob;
      d.value = value;

      const int mask_count =
          static_cast<int>(std::count(d.mask.begin(), d.mask.end(), static_cast<char>(1)));
      const int step_base = ep.steps;
      ActResult r = act(agent, *env, ep, d.action, cfg.log_trajectories);
      d.reward = r.reward;
      d.done = r.done ? 1 : 0;
      d.duration = r.duration;
      env_steps += r.duration;

      if (sa) {
        agent.abs->add_decision(agent.action_features(d.action), r.reward,
                                observation_features(ep.obs, agent.num_codes));
      }
      if (cfg.log_trajectories) {
        for (size_t k = 0; k < r.step_log.size(); ++k) {
          const StepOutcome& out = r.step_log[k];
          traj_log << episode_counter << ',' << (step_base + static_cast<int>(k) + 1) << ','
                   << (agent.hierarchical()
                           ? static_cast<int>(
                                 goal_from_flat(d.action, agent.frame_rows, agent.frame_cols).kind)
                           : d.action)
                   << ',' << fmt_exact(out.reward) << ',' << (out.done ? 1 : 0) << ','
                   << out.info.events << "\n";
        }
        if (agent.hierarchical()) {
          macro_log << decision_counter << ',' << d.action << ',' << r.duration << ','
                    << fmt_exact(r.reward) << ',' << mask_count << "\n";
        }
      }
      ++decision_counter;
      rollout.decisions.push_back(std::move(d));

      if (r.done) {
        if (is_multiitem) {
          const auto* mi = dynamic_cast<const MultiItemEnv*>(env.get());
          episode_log << episode_counter << ',' << fmt_exact(ep.score) << ',' << ep.steps
                      << ',' << mi->submit_number() << "\n";
        } else {
          episode_log << episode_counter << ',' << fmt_exact(ep.score) << ',' << ep.steps << "\n";
        }
        rollout_scores.push_back(ep.score);
        rollout_steps.push_back(ep.steps);
        all_scores.push_back(ep.score);
        all_steps.push_back(ep.steps);
        ++episode_counter;
        start_episode(agent, *env, ep, root.fork("episode", episode_counter).next_u64(), sa);
      }
    }
    if (rollout.decisions.empty()) break;

    // Bootstrap with the value of the current (possibly fresh) state; GAE
    // zeroes it after terminal decisions.
    {
      ppo::PolicyInput input = agent.build_input(ep.obs, &ep.hist);
      auto [logits, value] = agent.net->forward_one(agent.store, input);
      (void)logits;
      rollout.bootstrap_value = value;
    }

    Rng shuffle_rng = root.fork("shuffle", update_idx);
    const ppo::UpdateStats stats = ppo_update(agent.store, *agent.net, rollout, ppo_cfg, shuffle_rng);
    if (stats.nan_aborted) {
      std::cerr << "[dchrl] update " << update_idx << ": non-finite loss, update skipped\n";
    }

    double bisim_loss_value = 0.0;
    if (sa) {
      Rng abs_rng = root.fork("abs", update_idx);
      const abstraction::AbsTrainStats abs_stats = agent.abs->train_step(agent.store, abs_rng);
      if (!abs_stats.skipped) {
        bisim_loss_value = abs_stats.mean_loss;
        if (!result.has_bisim) {
          result.first_bisim_loss = abs_stats.mean_loss;
          result.has_bisim = true;
        }
        result.last_bisim_loss = abs_stats.mean_loss;
      }
    }

    if (!rollout_scores.empty()) {
      last_mean_score = mean_of(rollout_scores);
      last_mean_steps = mean_of(rollout_steps);
    }
    train_log << update_idx << ',' << env_steps << ',' << fmt(last_mean_score) << ','
              << fmt(last_mean_steps) << ',' << fmt(stats.policy_loss) << ','
              << fmt(stats.value_loss) << ',' << fmt(stats.entropy) << ','
              << fmt(stats.clip_fraction);
    if (sa) train_log << ',' << fmt(bisim_loss_value);
    train_log << "\n";

    ++update_idx;
    if (cfg.eval_episodes > 0 && update_idx % cfg.eval_every == 0) {
      const EvalSummary ev =
          evaluate(agent, root.fork("eval", update_idx).next_u64(), cfg.eval_episodes);
      eval_log << update_idx << ',' << env_steps << ',' << fmt(ev.score_mean) << ','
               << fmt(ev.score_std) << ',' << fmt(ev.steps_mean) << "\n";
      if (!result.has_eval || ev.score_mean > result.best_eval_score) {
        result.best_eval_score = ev.score_mean;
        result.has_eval = true;
      }
    }
    if (cfg.checkpoint_every > 0 && update_idx % cfg.checkpoint_every == 0) {
      save_ckpt("checkpoint_" + std::to_string(update_idx) + ".bin");
    }
  }

  save_ckpt("checkpoint_final.bin");

  result.env_steps = env_steps;
  result.episodes = static_cast<int>(all_scores.size());
  result.updates = update_idx;
  if (!all_scores.empty()) {
    const size_t tail = std::max<size_t>(1, (all_scores.size() + 9) / 10);
    std::vector<double> tail_scores(all_scores.end() - tail, all_scores.end());
    std::vector<double> tail_steps(all_steps.end() - tail, all_steps.end());
    result.converged_score = mean_of(tail_scores);
    result.converged_steps = mean_of(tail_steps);
  }
  return result;
}

MultiResult train_all_seeds(const ExperimentConfig& cfg) {
  MultiResult multi;
  for (uint64_t seed : cfg.seeds) {
    const std::string run_dir = cfg.out_dir + "/seed_" + std::to_string(seed);
    multi.runs.push_back(train_single(cfg, seed, run_dir));
  }

  std::vector<double> scores, steps;
  for (const TrainResult& r : multi.runs) {
    scores.push_back(r.converged_score);
    steps.push_back(r.converged_steps);
  }
  multi.score_mean = mean_of(scores);
  multi.score_std = std_of(scores);
  multi.steps_mean = mean_of(steps);

  fs::create_directories(cfg.out_dir);
  std::ofstream summary(cfg.out_dir + "/summary.txt");
  summary << "env=" << cfg.env << "\n";
  summary << "method=" << method_name(cfg.method) << "\n";
  summary << "seeds=" << multi.runs.size() << "\n";
  summary << "converged_score_mean=" << fmt(multi.score_mean) << "\n";
  summary << "converged_score_std=" << fmt(multi.score_std) << "\n";
  summary << "converged_steps_mean=" << fmt(multi.steps_mean) << "\n";
  for (const TrainResult& r : multi.runs) {
    summary << "run " << r.run_dir << " converged_score=" << fmt(r.converged_score)
            << " episodes=" << r.episodes << " env_steps=" << r.env_steps << "\n";
  }
  return multi;
}

// --- Curve export ---

namespace {

struct RunCurve {
  std::string method;
  std::vector<long long> env_steps;
  std::vector<double> value;
};

RunCurve read_run(const std::string& dir, bool use_steps) {
  RunCurve curve;
  std::ifstream manifest(dir + "/manifest.txt");
  if (!manifest) throw ConfigError("no manifest.txt in " + dir);
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.rfind("method=", 0) == 0) curve.method = line.substr(7);
  }
  if (curve.method.empty()) throw ConfigError("manifest without method in " + dir);

  std::ifstream log(dir + "/training_log.csv");
  if (!log) throw ConfigError("no training_log.csv in " + dir);
  std::getline(log, line);  // header
  while (std::getline(log, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() < 4) continue;
    curve.env_steps.push_back(std::stoll(cells[1]));
    curve.value.push_back(std::stod(cells[use_steps ? 3 : 2]));
  }
  return curve;
}

double value_at(const RunCurve& curve, long long step) {
  double v = curve.value.empty() ? 0.0 : curve.value.front();
  for (size_t i = 0; i < curve.env_steps.size(); ++i) {
    if (curve.env_steps[i] > step) break;
    v = curve.value[i];
  }
  return v;
}

}  // namespace

void export_curves(const CurveExportOptions& options) {
  if (options.run_dirs.empty()) throw ConfigError("export-curves: no run directories given");

  std::vector<RunCurve> curves;
  for (const std::string& dir : options.run_dirs) {
    curves.push_back(read_run(dir, options.use_steps));
  }

  long long common_end = std::numeric_limits<long long>::max();
  long long max_end = 0;
  for (const RunCurve& c : curves) {
    if (c.env_steps.empty()) throw ConfigError("export-curves: empty training log");
    common_end = std::min(common_end, c.env_steps.back());
    max_end = std::max(max_end, c.env_steps.back());
  }
  if (common_end != max_end) {
    std::cerr << "[dchrl] export-curves: budgets differ; aligning on the common prefix ("
              << common_end << " env steps)\n";
  }

  // The grid comes from the first run, truncated to the common prefix.
  std::vector<long long> grid;
  for (long long s : curves.front().env_steps) {
    if (s <= common_end) grid.push_back(s);
  }

  std::vector<std::string> methods;
  for (const RunCurve& c : curves) {
    if (std::find(methods.begin(), methods.end(), c.method) == methods.end())
      methods.push_back(c.method);
  }
  std::sort(methods.begin(), methods.end());

  const std::string metric = options.use_steps ? "steps" : "score";
  std::ofstream out(options.out_path);
  if (!out) throw ConfigError("export-curves: cannot write " + options.out_path);
  out << "env_steps";
  for (const std::string& m : methods) {
    out << ',' << m << '_' << metric << "_mean," << m << '_' << metric << "_std";
  }
  out << "\n";

  std::map<std::string, std::vector<std::vector<double>>> samples;  // method -> per-run series
  for (const RunCurve& c : curves) {
    std::vector<double> series;
    series.reserve(grid.size());
    for (long long s : grid) series.push_back(value_at(c, s));
    if (options.smooth > 1) {
      std::vector<double> smooth(series.size());
      for (size_t i = 0; i < series.size(); ++i) {
        const size_t lo = i + 1 >= static_cast<size_t>(options.smooth) ? i + 1 - options.smooth : 0;
        double acc = 0.0;
        for (size_t j = lo; j <= i; ++j) acc += series[j];
        smooth[i] = acc / static_cast<double>(i - lo + 1);
      }
      series = std::move(smooth);
    }
    samples[c.method].push_back(std::move(series));
  }

  for (size_t i = 0; i < grid.size(); ++i) {
    out << grid[i];
    for (const std::string& m : methods) {
      std::vector<double> vals;
      for (const auto& series : samples[m]) vals.push_back(series[i]);
      out << ',' << fmt(mean_of(vals)) << ',' << fmt(std_of(vals));
    }
    out << "\n";
  }
}

// --- Latent dumps ---

void z_dump(Agent& agent, uint64_t seed, int episodes, std::ostream& out) {
  if (agent.cfg.method != Method::DcHRLSA)
    throw ConfigError("z-dump requires method=dchrl_sa");

  out << "episode,decision";
  for (int i = 0; i < agent.cfg.resolved_dim_z(); ++i) out << ",z" << i;
  out << "\n";

  std::unique_ptr<Env> env = make_env(agent.cfg);
  Rng root(seed);
  for (int e = 0; e < episodes; ++e) {
    EpisodeState ep(agent.hist_spec);
    start_episode(agent, *env, ep, root.fork("zdump_episode", e).next_u64(), false);
    int decision = 0;
    while (true) {
      const std::vector<char> mask = agent.build_mask(*env, ep.obs);
      ppo::PolicyInput input = agent.build_input(ep.obs, &ep.hist);
      out << e << ',' << decision;
      for (int i = 0; i < input.dense.size(); ++i) out << ',' << fmt(input.dense(i));
      out << "\n";
      auto [logits, value] = agent.net->forward_one(agent.store, input);
      (void)value;
      std::vector<double> lv(logits.data(), logits.data() + logits.size());
      if (act(agent, *env, ep, ppo::masked_argmax(lv, mask), false).done) break;
      ++decision;
    }
  }
}

}  // namespace dchrl
