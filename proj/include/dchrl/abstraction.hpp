#pragma once

#include <deque>

#include "dchrl/nn.hpp"
#include "dchrl/rng.hpp"

namespace dchrl::abstraction {

using nn::Mat;
using nn::ParamBinder;
using nn::ParamStore;
using nn::Tape;
using nn::Value;
using Vec = Eigen::VectorXd;

// --- History sequences ---

struct HistorySpec {
  int length = 15;   // number of (observation, goal) pairs before the current observation
  int obs_dim = 0;   // observation feature size per step
  int goal_dim = 0;  // goal feature size per step (0 = goal-free encoding)

  int steps() const { return length + 1; }
  int step_dim() const { return obs_dim + goal_dim; }
};

// Alternating observation/goal record ending in the current observation.
// Missing history at episode start is zero-padded and marked invalid;
// entries are ordered oldest to newest.
class HistorySequence {
 public:
  explicit HistorySequence(HistorySpec spec) : spec_(spec) {}

  void reset(const std::vector<double>& obs_features);
  void advance(const std::vector<double>& goal_features,
               const std::vector<double>& next_obs_features);

  // (step_dim x steps) feature matrix: l past (obs, goal) pairs then the
  // current observation with a zeroed goal slot.
  Mat features() const;
  std::vector<double> validity() const;
  const HistorySpec& spec() const { return spec_; }

 private:
  struct Pair {
    std::vector<double> obs;
    std::vector<double> goal;
  };
  HistorySpec spec_;
  std::deque<Pair> past_;
  std::vector<double> current_;
};

// --- Augmentation ---

// Shifts the leading W x W window block of an observation feature vector by
// (dr, dc), refilling exposed cells with the scaled wall code. Non-window
// features (inventory) are untouched.
void shift_window_features(std::vector<double>& features, int W, int dr, int dc,
                           double wall_value);
void shift_window_features(Eigen::Ref<Eigen::VectorXd> features, int W, int dr, int dc,
                           double wall_value);

// --- Abstraction ---

// Encoder input: a history (recurrent mode) or a dense feature vector.
struct AbsInput {
  Mat hist;                   // step_dim x steps
  std::vector<double> valid;  // per step
  Vec dense;
};

// A training tuple (h, a, r, h'): history, the goal taken, the macro reward,
// and the successor history one macro decision later.
struct AbsTuple {
  AbsInput h;
  AbsInput h_next;
  std::vector<double> action;
  double reward = 0.0;
};

struct AbstractionSpec {
  bool recurrent = false;
  HistorySpec hist;              // recurrent mode
  int input_dim = 0;             // dense mode
  int z_dim = 0;
  int lstm_hidden = 64;
  std::vector<int> dense_hidden{64};
  std::vector<int> head_hidden{64};
  int action_dim = 3;
  double lambda = 1.0;
  int batch_size = 384;
  int train_freq = 30;
  size_t buffer_capacity = 50000;
  double lr = 1e-4;
  // Window-shift augmentation (egocentric observations only).
  bool augment = false;
  int window_w = 0;
  double wall_value = 0.0;
};

struct AbsTrainStats {
  double mean_loss = 0.0;
  int steps = 0;
  bool skipped = false;  // buffer smaller than one batch
};

// DeepMDP abstraction: encoder phi over states or observation-goal
// histories, a reward head and a latent-transition head, trained by the
// bisimulation loss. The successor encoding is treated as a constant target
// (no gradient), which blocks collapse to a constant representation; the
// loss value itself is unchanged by this choice.
class Abstraction {
 public:
  Abstraction(AbstractionSpec spec, ParamStore& store, Rng& init_rng);

  const AbstractionSpec& spec() const { return spec_; }

  // Inference (no gradients).
  Vec encode(ParamStore& store, const HistorySequence& h) const;
  Vec encode_dense(ParamStore& store, const Vec& x) const;

  // Batched encoder forward.
  Value encode_batch(Tape& tape, ParamBinder& bind,
                     const std::vector<const AbsInput*>& batch) const;

  // Mean over the batch of squared reward-prediction error plus
  // lambda-weighted squared latent-transition error. The successor encoding
  // is recomputed under the current parameters and treated as a constant;
  // finite C-difference checks must pass the same frozen targets via
  // `fixed_targets` (z_dim x batch), since the optimization objective holds
  // them fixed.
  Value bisim_loss(Tape& tape, ParamBinder& bind, const std::vector<const AbsTuple*>& batch,
                   double lambda, const Mat* fixed_targets = nullptr) const;

  // Successor encodings under the current parameters (no gradients).
  Mat successor_targets(ParamStore& store, const std::vector<const AbsTuple*>& batch) const;

  // Experience ingestion (episode-sliced storage; histories materialize on
  // sampling).
  void begin_episode(const std::vector<double>& obs_features);
  void add_decision(const std::vector<double>& goal_features, double reward,
                    const std::vector<double>& next_obs_features);
  size_t size() const { return total_decisions_; }

  // train_freq Adam steps over uniformly sampled minibatches.
  AbsTrainStats train_step(ParamStore& store, Rng& rng);

  AbsTuple materialize(size_t episode, int t, Rng* augment_rng) const;
  size_t num_episodes() const { return episodes_.size(); }

 private:
  struct Episode {
    std::vector<std::vector<double>> obs;    // K+1 observation features
    std::vector<std::vector<double>> goals;  // K goal features
    std::vector<double> rewards;             // K macro rewards
    int decisions() const { return static_cast<int>(rewards.size()); }
  };

  AbsInput make_input(const Episode& ep, int t) const;
  void evict();

  AbstractionSpec spec_;
  nn::LstmSpec lstm_;
  nn::MlpSpec proj_;
  nn::MlpSpec dense_;
  nn::MlpSpec reward_head_;
  nn::MlpSpec transition_head_;
  std::deque<Episode> episodes_;
  size_t total_decisions_ = 0;
};

}  // namespace dchrl::abstraction
