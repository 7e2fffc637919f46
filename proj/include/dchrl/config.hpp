#pragma once

#include <map>
#include <string>
#include <vector>

#include "dchrl/env_core.hpp"

namespace dchrl {

enum class Method { PPO, DcHRL, DcHRLSA };

const char* method_name(Method m);
Method method_from_name(const std::string& name);

// Flat key=value experiment configuration. Keys mirror the usual
// hyperparameter names (lr, gamma, lambda, epsilon, bs, l, dim_z, bs_abs,
// tf); unknown keys are rejected by name. See README for the full table.
struct ExperimentConfig {
  // environment
  std::string env = "doorkey";  // doorkey | multiitem
  ObsMode mode = ObsMode::Egocentric;
  int grid_size = 16;
  int window = 5;
  int num_keys = 2;
  int max_steps = 0;  // 0 = per-env default (512 doorkey, 1152 multiitem)
  int num_item_types = 21;
  int total_items = 140;
  int group_size = 4;
  uint64_t layout_seed = 0;
  double penalty_divisor = 144.0;
  bool penalty_counts_groups = false;

  // method
  Method method = Method::DcHRLSA;

  // policy optimization
  double lr = 1e-4;
  double gamma = 0.997;
  double lambda_gae = 0.95;
  double epsilon = 0.2;
  int bs = 256;
  int history_l = 15;
  bool include_goals_in_history = false;
  int rollout = 2048;
  int epochs = 4;
  double ent_coef = 0.01;
  double vf_coef = 0.5;
  double grad_clip = 0.5;
  bool smdp_discount = false;

  // state abstraction
  int dim_z = 0;  // 0 = per-env default (60 doorkey; 25 MDP / 40 POMDP multiitem)
  int bs_abs = 384;
  int tf = 30;
  double lambda_bisim = 1.0;
  int buffer_capacity = 50000;
  bool augment = true;

  // network sizes
  int lstm_hidden = 64;
  int policy_hidden = 64;
  int encoder_hidden = 64;
  int head_hidden = 64;

  // run control
  std::vector<uint64_t> seeds{1, 2, 3};
  long long budget = 200000;  // primitive environment steps per seed
  int eval_every = 5;
  int eval_episodes = 10;
  int checkpoint_every = 50;
  std::string out_dir = "runs/out";
  bool log_trajectories = false;

  int resolved_max_steps() const;
  int resolved_dim_z() const;
  void validate() const;

  void apply_override(const std::string& key, const std::string& value);
  static ExperimentConfig from_text(const std::string& text);
  static ExperimentConfig from_file(const std::string& path);
  // Reads a run manifest back into (config, seed), skipping run metadata.
  static ExperimentConfig from_manifest(const std::string& path, uint64_t* seed_out);
  // Resolved flat key=value dump; parsing it back reproduces the config.
  std::string to_text() const;

  static std::vector<std::string> preset_names();
  static ExperimentConfig preset(const std::string& name);
};

}  // namespace dchrl
