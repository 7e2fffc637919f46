#pragma once

#include <Eigen/Dense>
#include <vector>

#include "dchrl/nn.hpp"
#include "dchrl/rng.hpp"

namespace dchrl::ppo {

using nn::Mat;
using nn::ParamBinder;
using nn::ParamStore;
using nn::Tape;
using nn::Value;
using Vec = Eigen::VectorXd;

struct MaskError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// --- Masked categorical ---

// Probabilities of a softmax restricted to mask!=0 entries; masked entries
// are exactly 0.
std::vector<double> masked_softmax(const std::vector<double>& logits,
                                   const std::vector<char>& mask);

struct SampleResult {
  int index = 0;
  double log_prob = 0.0;
};

// Samples a valid index; throws MaskError when no mask bit is set.
SampleResult masked_sample(const std::vector<double>& logits, const std::vector<char>& mask,
                           Rng& rng);

// Greedy valid index (first max wins ties).
int masked_argmax(const std::vector<double>& logits, const std::vector<char>& mask);

// --- Advantage estimation ---

// Recursive GAE. delta_t = r_t + g_t V_{t+1} (1 - done_t) - V_t and
// A_t = delta_t + g_t lambda (1 - done_t) A_{t+1}, where g_t is gamma by
// default (one discount tick per decision) or gamma^duration_t when
// durations are given (SMDP-style).
std::vector<double> gae(const std::vector<double>& rewards, const std::vector<double>& values,
                        const std::vector<char>& dones, double bootstrap_value, double gamma,
                        double lambda, const std::vector<int>* durations = nullptr);

// --- Policy/value network ---

// One decision's network input: a dense feature vector, or a history matrix
// (step features x steps, oldest first) with per-step validity for the
// recurrent trunk.
struct PolicyInput {
  Vec dense;
  Mat hist;
  std::vector<double> valid;
};

struct PolicySpec {
  bool recurrent = false;
  int input_dim = 0;  // dense input size, or per-step feature size
  int steps = 0;      // history length (recurrent only)
  int lstm_hidden = 64;
  std::vector<int> pi_hidden{64, 64};
  std::vector<int> v_hidden{64, 64};
  int num_actions = 0;
};

// Categorical policy head plus scalar value head over a shared input
// pipeline. The recurrent variant runs an LSTM trunk over the history and
// feeds its final hidden state to both heads; the dense variant feeds the
// input to both heads directly. The same network serves the flat PPO
// baseline (5 primitive actions, full mask) and the hierarchical methods
// (goal space plus validity mask): only the configuration differs.
class PolicyValueNet {
 public:
  PolicyValueNet(PolicySpec spec, const std::string& prefix, ParamStore& store, Rng& init_rng);

  // Batched forward; returns (logits: A x B, values: 1 x B).
  std::pair<Value, Value> forward(Tape& tape, ParamBinder& bind,
                                  const std::vector<const PolicyInput*>& batch) const;

  // Single-sample inference without gradients.
  std::pair<Vec, double> forward_one(ParamStore& store, const PolicyInput& input) const;

  const PolicySpec& spec() const { return spec_; }

 private:
  PolicySpec spec_;
  std::string prefix_;
  nn::LstmSpec lstm_;
  nn::MlpSpec pi_;
  nn::MlpSpec v_;
};

// --- Rollouts and updates ---

struct Decision {
  PolicyInput input;
  std::vector<char> mask;
  int action = 0;
  double log_prob = 0.0;
  double value = 0.0;
  double reward = 0.0;
  char done = 0;
  int duration = 1;
};

struct Rollout {
  std::vector<Decision> decisions;
  double bootstrap_value = 0.0;
  std::vector<double> advantages;  // filled by ppo_update
  std::vector<double> returns;
};

struct PpoConfig {
  double lr = 1e-4;
  double gamma = 0.997;
  double gae_lambda = 0.95;
  double clip_eps = 0.2;
  int minibatch = 256;
  int epochs = 4;
  double ent_coef = 0.01;
  double vf_coef = 0.5;
  double grad_clip = 0.5;
  bool smdp_discount = false;  // gamma^duration per macro decision
};

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;
  double grad_norm = 0.0;
  int minibatches = 0;
  bool nan_aborted = false;
};

// Computes GAE + returns on the rollout, normalizes advantages to mean 0 /
// std 1 across the batch, then runs clipped-surrogate epochs over shuffled
// minibatches. A non-finite loss aborts the remaining minibatches without
// applying that step.
UpdateStats ppo_update(ParamStore& store, const PolicyValueNet& net, Rollout& rollout,
                       const PpoConfig& cfg, Rng& shuffle_rng);

}  // namespace dchrl::ppo
