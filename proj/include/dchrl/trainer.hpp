#pragma once

#include <memory>

#include "dchrl/abstraction.hpp"
#include "dchrl/config.hpp"
#include "dchrl/hierarchy.hpp"
#include "dchrl/ppo.hpp"

namespace dchrl {

std::unique_ptr<Env> make_env(const ExperimentConfig& cfg);

// Networks plus optional abstraction assembled for one configuration. The
// three methods share one collection/update path; they differ only in action
// space (5 primitives vs. the goal space with its mask) and in policy input
// (raw features, histories, or the abstract state).
struct Agent {
  ExperimentConfig cfg;
  nn::ParamStore store;
  std::unique_ptr<ppo::PolicyValueNet> net;
  std::unique_ptr<abstraction::Abstraction> abs;

  int num_actions = 0;
  int frame_rows = 0;
  int frame_cols = 0;
  int obs_feat_dim = 0;
  int num_codes = 0;
  abstraction::HistorySpec hist_spec;

  bool hierarchical() const { return cfg.method != Method::PPO; }
  bool pomdp() const { return cfg.mode == ObsMode::Egocentric; }
  // DcHRL-SA consumes the latent state; the other methods in POMDP mode run
  // the LSTM inside the policy.
  bool policy_recurrent() const { return pomdp() && cfg.method != Method::DcHRLSA; }

  ppo::PolicyInput build_input(const Observation& obs,
                               const abstraction::HistorySequence* hist);
  std::vector<char> build_mask(const Env& env, const Observation& obs) const;
  std::vector<double> action_features(int action_index) const;
};

Agent make_agent(const ExperimentConfig& cfg, uint64_t seed);

// Checkpoint compatibility fingerprint; mismatches raise ConfigError.
std::map<std::string, std::string> agent_fingerprint(const Agent& agent);
void check_fingerprint(const Agent& agent, const std::map<std::string, std::string>& meta);

struct EvalSummary {
  int episodes = 0;
  double score_mean = 0.0;
  double score_std = 0.0;
  double steps_mean = 0.0;
};

// Greedy (argmax) policy evaluation over fresh episodes.
EvalSummary evaluate(Agent& agent, uint64_t seed, int episodes);

struct TrainResult {
  std::string run_dir;
  long long env_steps = 0;
  int episodes = 0;
  int updates = 0;
  double converged_score = 0.0;  // mean over the final 10% of episodes
  double converged_steps = 0.0;
  double best_eval_score = 0.0;
  bool has_eval = false;
  double first_bisim_loss = 0.0;
  double last_bisim_loss = 0.0;
  bool has_bisim = false;
};

// Trains one seed, writing manifest.txt, training_log.csv, eval_log.csv,
// episodes.csv and checkpoints under run_dir. `resume_ckpt` restores
// parameters, optimizer moments and counters from a saved checkpoint.
TrainResult train_single(const ExperimentConfig& cfg, uint64_t seed, const std::string& run_dir,
                         const std::string& resume_ckpt = "");

struct MultiResult {
  std::vector<TrainResult> runs;
  double score_mean = 0.0;
  double score_std = 0.0;
  double steps_mean = 0.0;
};

// Runs every configured seed sequentially and writes out_dir/summary.txt
// with the converged score as mean +/- std across seeds.
MultiResult train_all_seeds(const ExperimentConfig& cfg);

struct CurveExportOptions {
  std::vector<std::string> run_dirs;
  std::string out_path;
  bool use_steps = false;  // export steps-to-completion instead of score
  int smooth = 0;          // trailing mean window; 0 = off
};

// Merges per-seed training logs into an env-step-aligned CSV with one
// (mean, std) column pair per method. Mismatched budgets align on the common
// prefix with a warning on stderr.
void export_curves(const CurveExportOptions& options);

// Writes one CSV row per high-level decision of greedy play:
// episode,decision,z components.
void z_dump(Agent& agent, uint64_t seed, int episodes, std::ostream& out);

}  // namespace dchrl
