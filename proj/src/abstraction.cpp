#include "dchrl/abstraction.hpp"

#include <algorithm>

namespace dchrl::abstraction {

// --- HistorySequence ---

void HistorySequence::reset(const std::vector<double>& obs_features) {
  past_.clear();
  current_ = obs_features;
}

void HistorySequence::advance(const std::vector<double>& goal_features,
                              const std::vector<double>& next_obs_features) {
  past_.push_back(Pair{current_, goal_features});
  while (static_cast<int>(past_.size()) > spec_.length) past_.pop_front();
  current_ = next_obs_features;
}

Mat HistorySequence::features() const {
  Mat out = Mat::Zero(spec_.step_dim(), spec_.steps());
  const int pad = spec_.length - static_cast<int>(past_.size());
  for (size_t i = 0; i < past_.size(); ++i) {
    const int col = pad + static_cast<int>(i);
    for (size_t j = 0; j < past_[i].obs.size(); ++j) out(static_cast<int>(j), col) = past_[i].obs[j];
    for (int j = 0; j < spec_.goal_dim; ++j) out(spec_.obs_dim + j, col) = past_[i].goal[j];
  }
  for (size_t j = 0; j < current_.size(); ++j)
    out(static_cast<int>(j), spec_.length) = current_[j];
  return out;
}

std::vector<double> HistorySequence::validity() const {
  std::vector<double> v(spec_.steps(), 0.0);
  const int pad = spec_.length - static_cast<int>(past_.size());
  for (int t = pad; t < spec_.steps(); ++t) v[t] = 1.0;
  return v;
}

// --- Augmentation ---

void shift_window_features(std::vector<double>& features, int W, int dr, int dc,
                           double wall_value) {
  Eigen::Map<Eigen::VectorXd> map(features.data(), static_cast<Eigen::Index>(features.size()));
  shift_window_features(Eigen::Ref<Eigen::VectorXd>(map), W, dr, dc, wall_value);
}

void shift_window_features(Eigen::Ref<Eigen::VectorXd> features, int W, int dr, int dc,
                           double wall_value) {
  std::vector<double> shifted(static_cast<size_t>(W) * W, wall_value);
  for (int r = 0; r < W; ++r) {
    for (int c = 0; c < W; ++c) {
      const int sr = r + dr, sc = c + dc;
      if (sr < 0 || sr >= W || sc < 0 || sc >= W) continue;
      shifted[static_cast<size_t>(r) * W + c] = features(sr * W + sc);
    }
  }
  for (int i = 0; i < W * W; ++i) features(i) = shifted[static_cast<size_t>(i)];
}

// --- Abstraction ---

Abstraction::Abstraction(AbstractionSpec spec, ParamStore& store, Rng& init_rng)
    : spec_(std::move(spec)) {
  if (spec_.recurrent) {
    lstm_ = nn::LstmSpec{spec_.hist.step_dim(), spec_.lstm_hidden};
    proj_ = nn::MlpSpec{spec_.lstm_hidden, {}, spec_.z_dim, nn::MlpSpec::Act::Tanh};
    nn::init_lstm(store, "abs/enc/lstm", lstm_, init_rng);
    nn::init_mlp(store, "abs/enc/proj", proj_, init_rng);
  } else {
    dense_ = nn::MlpSpec{spec_.input_dim, spec_.dense_hidden, spec_.z_dim, nn::MlpSpec::Act::Tanh};
    nn::init_mlp(store, "abs/enc", dense_, init_rng);
  }
  reward_head_ =
      nn::MlpSpec{spec_.z_dim + spec_.action_dim, spec_.head_hidden, 1, nn::MlpSpec::Act::Tanh};
  transition_head_ = nn::MlpSpec{spec_.z_dim + spec_.action_dim, spec_.head_hidden, spec_.z_dim,
                                 nn::MlpSpec::Act::Tanh};
  nn::init_mlp(store, "abs/r", reward_head_, init_rng);
  nn::init_mlp(store, "abs/p", transition_head_, init_rng);
}

Value Abstraction::encode_batch(Tape& tape, ParamBinder& bind,
                                const std::vector<const AbsInput*>& batch) const {
  const int B = static_cast<int>(batch.size());
  if (spec_.recurrent) {
    std::vector<Value> xs;
    std::vector<nn::RowVec> valid;
    const int steps = spec_.hist.steps();
    xs.reserve(steps);
    valid.reserve(steps);
    for (int t = 0; t < steps; ++t) {
      Mat x(spec_.hist.step_dim(), B);
      nn::RowVec v(B);
      for (int j = 0; j < B; ++j) {
        x.col(j) = batch[j]->hist.col(t);
        v(j) = batch[j]->valid[t];
      }
      xs.push_back(tape.constant(x));
      valid.push_back(std::move(v));
    }
    Value h = nn::lstm_forward(tape, bind, "abs/enc/lstm", lstm_, xs, valid);
    return nn::mlp_forward(tape, bind, "abs/enc/proj", proj_, h);
  }
  Mat x(spec_.input_dim, B);
  for (int j = 0; j < B; ++j) x.col(j) = batch[j]->dense;
  return nn::mlp_forward(tape, bind, "abs/enc", dense_, tape.constant(x));
}

Vec Abstraction::encode(ParamStore& store, const HistorySequence& h) const {
  const Vec hidden = nn::lstm_apply(store, "abs/enc/lstm", lstm_, h.features(), h.validity());
  return nn::mlp_apply(store, "abs/enc/proj", proj_, hidden);
}

Vec Abstraction::encode_dense(ParamStore& store, const Vec& x) const {
  return nn::mlp_apply(store, "abs/enc", dense_, x);
}

Mat Abstraction::successor_targets(ParamStore& store,
                                   const std::vector<const AbsTuple*>& batch) const {
  std::vector<const AbsInput*> hs_next;
  hs_next.reserve(batch.size());
  for (const AbsTuple* t : batch) hs_next.push_back(&t->h_next);
  Tape tape(false);
  ParamBinder bind(tape, store);
  return tape.val(encode_batch(tape, bind, hs_next));
}

Value Abstraction::bisim_loss(Tape& tape, ParamBinder& bind,
                              const std::vector<const AbsTuple*>& batch, double lambda,
                              const Mat* fixed_targets) const {
  const int B = static_cast<int>(batch.size());
  std::vector<const AbsInput*> hs(B), hs_next(B);
  Mat actions(spec_.action_dim, B);
  Mat rewards(1, B);
  for (int j = 0; j < B; ++j) {
    hs[j] = &batch[j]->h;
    hs_next[j] = &batch[j]->h_next;
    for (int i = 0; i < spec_.action_dim; ++i) actions(i, j) = batch[j]->action[i];
    rewards(0, j) = batch[j]->reward;
  }

  Value z = encode_batch(tape, bind, hs);
  Value z_next = fixed_targets ? tape.constant(*fixed_targets)
                               : tape.stop_gradient(encode_batch(tape, bind, hs_next));
  Value za = tape.concat_rows(z, tape.constant(actions));

  Value r_hat = nn::mlp_forward(tape, bind, "abs/r", reward_head_, za);
  Value p_hat = nn::mlp_forward(tape, bind, "abs/p", transition_head_, za);

  Value reward_term = tape.sum_squares(tape.sub(r_hat, tape.constant(rewards)));
  Value transition_term = tape.sum_squares(tape.sub(p_hat, z_next));
  Value loss = tape.add(reward_term, tape.scale(transition_term, lambda));
  return tape.scale(loss, 1.0 / B);
}

// --- Replay storage ---

void Abstraction::begin_episode(const std::vector<double>& obs_features) {
  Episode ep;
  ep.obs.push_back(obs_features);
  episodes_.push_back(std::move(ep));
}

void Abstraction::add_decision(const std::vector<double>& goal_features, double reward,
                               const std::vector<double>& next_obs_features) {
  Episode& ep = episodes_.back();
  ep.goals.push_back(goal_features);
  ep.rewards.push_back(reward);
  ep.obs.push_back(next_obs_features);
  ++total_decisions_;
  evict();
}

void Abstraction::evict() {
  while (total_decisions_ > spec_.buffer_capacity && episodes_.size() > 1) {
    total_decisions_ -= static_cast<size_t>(episodes_.front().decisions());
    episodes_.pop_front();
  }
}

AbsInput Abstraction::make_input(const Episode& ep, int t) const {
  AbsInput input;
  if (!spec_.recurrent) {
    const std::vector<double>& o = ep.obs[t];
    input.dense = Eigen::Map<const Vec>(o.data(), static_cast<Eigen::Index>(o.size()));
    return input;
  }
  HistorySequence h(spec_.hist);
  const int start = std::max(0, t - spec_.hist.length);
  h.reset(ep.obs[start]);
  for (int i = start; i < t; ++i) h.advance(ep.goals[i], ep.obs[i + 1]);
  input.hist = h.features();
  input.valid = h.validity();
  return input;
}

AbsTuple Abstraction::materialize(size_t episode, int t, Rng* augment_rng) const {
  const Episode& ep = episodes_[episode];
  AbsTuple tuple;
  tuple.h = make_input(ep, t);
  tuple.h_next = make_input(ep, t + 1);
  tuple.action = ep.goals[t];
  tuple.reward = ep.rewards[t];

  if (augment_rng && spec_.augment && spec_.recurrent && augment_rng->next_bool(0.5)) {
    // One shift per tuple, applied to every observation in h and h'.
    int dr = 0, dc = 0;
    while (dr == 0 && dc == 0) {
      dr = augment_rng->next_int(-1, 1);
      dc = augment_rng->next_int(-1, 1);
    }
    for (Mat* m : {&tuple.h.hist, &tuple.h_next.hist}) {
      for (int col = 0; col < m->cols(); ++col) {
        shift_window_features(m->col(col).head(spec_.window_w * spec_.window_w), spec_.window_w,
                              dr, dc, spec_.wall_value);
      }
    }
  }
  return tuple;
}

AbsTrainStats Abstraction::train_step(ParamStore& store, Rng& rng) {
  AbsTrainStats stats;
  if (total_decisions_ < static_cast<size_t>(spec_.batch_size)) {
    stats.skipped = true;
    return stats;
  }

  // Flat index over stored decisions for uniform sampling.
  std::vector<size_t> cumulative;
  cumulative.reserve(episodes_.size());
  size_t running = 0;
  for (const Episode& ep : episodes_) {
    running += static_cast<size_t>(ep.decisions());
    cumulative.push_back(running);
  }

  const nn::AdamConfig adam{spec_.lr, 0.9, 0.999, 1e-8};
  for (int step = 0; step < spec_.train_freq; ++step) {
    std::vector<AbsTuple> tuples;
    tuples.reserve(spec_.batch_size);
    for (int i = 0; i < spec_.batch_size; ++i) {
      const size_t pick = rng.next_below(running);
      const size_t ep_idx = static_cast<size_t>(
          std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
      const size_t before = ep_idx == 0 ? 0 : cumulative[ep_idx - 1];
      tuples.push_back(materialize(ep_idx, static_cast<int>(pick - before), &rng));
    }
    std::vector<const AbsTuple*> batch;
    batch.reserve(tuples.size());
    for (const AbsTuple& t : tuples) batch.push_back(&t);

    Tape tape;
    ParamBinder bind(tape, store);
    Value loss = bisim_loss(tape, bind, batch, spec_.lambda);
    tape.backward(loss);
    auto grads = bind.grads();
    nn::adam_step(store, grads, adam);

    stats.mean_loss += tape.val(loss)(0, 0);
    ++stats.steps;
  }
  if (stats.steps > 0) stats.mean_loss /= stats.steps;
  return stats;
}

}  // namespace dchrl::abstraction
