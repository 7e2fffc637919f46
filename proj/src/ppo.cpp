#include "dchrl/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace dchrl::ppo {

// --- Masked categorical ---

std::vector<double> masked_softmax(const std::vector<double>& logits,
                                   const std::vector<char>& mask) {
  if (logits.size() != mask.size()) throw MaskError("masked_softmax: size mismatch");
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) mx = std::max(mx, logits[i]);
  }
  if (!std::isfinite(mx)) throw MaskError("masked_softmax: empty mask");
  double z = 0.0;
  for (size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) z += std::exp(logits[i] - mx);
  }
  std::vector<double> probs(logits.size(), 0.0);
  for (size_t i = 0; i < logits.size(); ++i) {
    if (mask[i]) probs[i] = std::exp(logits[i] - mx) / z;
  }
  return probs;
}

SampleResult masked_sample(const std::vector<double>& logits, const std::vector<char>& mask,
                           Rng& rng) {
  const std::vector<double> probs = masked_softmax(logits, mask);
  const double u = rng.next_double();
  double cum = 0.0;
  int chosen = -1;
  for (size_t i = 0; i < probs.size(); ++i) {
    if (!mask[i]) continue;
    cum += probs[i];
    chosen = static_cast<int>(i);
    if (u < cum) break;
  }
  SampleResult out;
  out.index = chosen;
  out.log_prob = std::log(probs[chosen]);
  return out;
}

int masked_argmax(const std::vector<double>& logits, const std::vector<char>& mask) {
  int best = -1;
  for (size_t i = 0; i < logits.size(); ++i) {
    if (!mask[i]) continue;
    if (best < 0 || logits[i] > logits[best]) best = static_cast<int>(i);
  }
  if (best < 0) throw MaskError("masked_argmax: empty mask");
  return best;
}

// --- GAE ---

std::vector<double> gae(const std::vector<double>& rewards, const std::vector<double>& values,
                        const std::vector<char>& dones, double bootstrap_value, double gamma,
                        double lambda, const std::vector<int>* durations) {
  const size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw MaskError("gae: length mismatch");
  if (durations && durations->size() != n) throw MaskError("gae: duration length mismatch");

  std::vector<double> advantages(n, 0.0);
  double next_adv = 0.0;
  for (size_t i = n; i-- > 0;) {
    const double g = durations ? std::pow(gamma, (*durations)[i]) : gamma;
    const double next_value = (i + 1 < n) ? values[i + 1] : bootstrap_value;
    const double not_done = dones[i] ? 0.0 : 1.0;
    const double delta = rewards[i] + g * next_value * not_done - values[i];
    next_adv = delta + g * lambda * not_done * next_adv;
    advantages[i] = next_adv;
  }
  return advantages;
}

// --- Policy/value network ---

PolicyValueNet::PolicyValueNet(PolicySpec spec, const std::string& prefix, ParamStore& store,
                               Rng& init_rng)
    : spec_(std::move(spec)), prefix_(prefix) {
  int head_input = spec_.input_dim;
  if (spec_.recurrent) {
    lstm_.input_dim = spec_.input_dim;
    lstm_.hidden_dim = spec_.lstm_hidden;
    nn::init_lstm(store, prefix_ + "/trunk", lstm_, init_rng);
    head_input = spec_.lstm_hidden;
  }
  pi_ = nn::MlpSpec{head_input, spec_.pi_hidden, spec_.num_actions, nn::MlpSpec::Act::Tanh};
  v_ = nn::MlpSpec{head_input, spec_.v_hidden, 1, nn::MlpSpec::Act::Tanh};
  nn::init_mlp(store, prefix_ + "/pi", pi_, init_rng);
  nn::init_mlp(store, prefix_ + "/v", v_, init_rng);
}

std::pair<Value, Value> PolicyValueNet::forward(Tape& tape, ParamBinder& bind,
                                                const std::vector<const PolicyInput*>& batch) const {
  const int B = static_cast<int>(batch.size());
  Value features;

  if (spec_.recurrent) {
    std::vector<Value> xs;
    std::vector<nn::RowVec> valid;
    xs.reserve(spec_.steps);
    valid.reserve(spec_.steps);
    for (int t = 0; t < spec_.steps; ++t) {
      Mat x(spec_.input_dim, B);
      nn::RowVec v(B);
      for (int j = 0; j < B; ++j) {
        x.col(j) = batch[j]->hist.col(t);
        v(j) = batch[j]->valid[t];
      }
      xs.push_back(tape.constant(x));
      valid.push_back(std::move(v));
    }
    features = nn::lstm_forward(tape, bind, prefix_ + "/trunk", lstm_, xs, valid);
  } else {
    Mat x(spec_.input_dim, B);
    for (int j = 0; j < B; ++j) x.col(j) = batch[j]->dense;
    features = tape.constant(x);
  }

  Value logits = nn::mlp_forward(tape, bind, prefix_ + "/pi", pi_, features);
  Value values = nn::mlp_forward(tape, bind, prefix_ + "/v", v_, features);
  return {logits, values};
}

std::pair<Vec, double> PolicyValueNet::forward_one(ParamStore& store,
                                                   const PolicyInput& input) const {
  Vec features;
  if (spec_.recurrent) {
    features = nn::lstm_apply(store, prefix_ + "/trunk", lstm_, input.hist, input.valid);
  } else {
    features = input.dense;
  }
  Vec logits = nn::mlp_apply(store, prefix_ + "/pi", pi_, features);
  Vec value = nn::mlp_apply(store, prefix_ + "/v", v_, features);
  return {std::move(logits), value(0)};
}

// --- PPO update ---

UpdateStats ppo_update(ParamStore& store, const PolicyValueNet& net, Rollout& rollout,
                       const PpoConfig& cfg, Rng& shuffle_rng) {
  UpdateStats stats;
  const size_t n = rollout.decisions.size();
  if (n == 0) return stats;

  std::vector<double> rewards(n), values(n);
  std::vector<char> dones(n);
  std::vector<int> durations(n);
  for (size_t i = 0; i < n; ++i) {
    const Decision& d = rollout.decisions[i];
    rewards[i] = d.reward;
    values[i] = d.value;
    dones[i] = d.done;
    durations[i] = d.duration;
  }
  rollout.advantages = gae(rewards, values, dones, rollout.bootstrap_value, cfg.gamma,
                           cfg.gae_lambda, cfg.smdp_discount ? &durations : nullptr);
  rollout.returns.resize(n);
  for (size_t i = 0; i < n; ++i) rollout.returns[i] = rollout.advantages[i] + values[i];

  // Normalize advantages across the whole batch.
  double mean = 0.0;
  for (double a : rollout.advantages) mean += a;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double a : rollout.advantages) var += (a - mean) * (a - mean);
  const double std_dev = std::sqrt(var / static_cast<double>(n));
  std::vector<double> norm_adv(n);
  for (size_t i = 0; i < n; ++i) {
    norm_adv[i] = (rollout.advantages[i] - mean) / (std_dev + 1e-8);
  }

  const nn::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  double sum_pl = 0.0, sum_vl = 0.0, sum_ent = 0.0, sum_clip = 0.0, sum_kl = 0.0, sum_norm = 0.0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (size_t start = 0; start < n; start += cfg.minibatch) {
      const size_t end = std::min(n, start + cfg.minibatch);
      const int B = static_cast<int>(end - start);

      std::vector<const PolicyInput*> inputs(B);
      std::vector<int> actions(B);
      Mat mask(net.spec().num_actions, B);
      Mat adv_row(1, B), old_logp(1, B), returns_row(1, B);
      for (int j = 0; j < B; ++j) {
        const Decision& d = rollout.decisions[order[start + j]];
        inputs[j] = &d.input;
        actions[j] = d.action;
        for (int i = 0; i < net.spec().num_actions; ++i) mask(i, j) = d.mask[i] ? 1.0 : 0.0;
        adv_row(0, j) = norm_adv[order[start + j]];
        old_logp(0, j) = d.log_prob;
        returns_row(0, j) = rollout.returns[order[start + j]];
      }

      Tape tape;
      ParamBinder bind(tape, store);
      auto [logits, values_v] = net.forward(tape, bind, inputs);
      Value logp_full = tape.masked_log_softmax(logits, mask);
      Value logp = tape.gather_columns(logp_full, actions);
      Value ratio = tape.exp_(tape.sub(logp, tape.constant(old_logp)));
      Value adv_c = tape.constant(adv_row);
      Value surr = tape.min_(tape.mul(ratio, adv_c),
                             tape.mul(tape.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps),
                                      adv_c));
      Value policy_loss = tape.scale(tape.mean_all(surr), -1.0);

      Value verr = tape.sub(values_v, tape.constant(returns_row));
      Value value_loss = tape.scale(tape.sum_squares(verr), 1.0 / B);

      Value probs = tape.exp_(logp_full);
      Value entropy = tape.scale(tape.scale(tape.sum(tape.mul(probs, logp_full)), -1.0), 1.0 / B);

      Value total = tape.add(policy_loss, tape.scale(value_loss, cfg.vf_coef));
      total = tape.sub(total, tape.scale(entropy, cfg.ent_coef));

      const double loss_value = tape.val(total)(0, 0);
      if (!std::isfinite(loss_value)) {
        stats.nan_aborted = true;
        return stats;
      }

      tape.backward(total);
      auto grads = bind.grads();
      sum_norm += nn::clip_grad_norm(grads, cfg.grad_clip);
      nn::adam_step(store, grads, adam);

      // Diagnostics from the plain values.
      const Mat& ratio_v = tape.val(ratio);
      int clipped = 0;
      double kl = 0.0;
      for (int j = 0; j < B; ++j) {
        if (std::abs(ratio_v(0, j) - 1.0) > cfg.clip_eps) ++clipped;
        kl += old_logp(0, j) - tape.val(logp)(0, j);
      }
      sum_pl += tape.val(policy_loss)(0, 0);
      sum_vl += tape.val(value_loss)(0, 0);
      sum_ent += tape.val(entropy)(0, 0);
      sum_clip += static_cast<double>(clipped) / B;
      sum_kl += kl / B;
      ++stats.minibatches;
    }
  }

  if (stats.minibatches > 0) {
    stats.policy_loss = sum_pl / stats.minibatches;
    stats.value_loss = sum_vl / stats.minibatches;
    stats.entropy = sum_ent / stats.minibatches;
    stats.clip_fraction = sum_clip / stats.minibatches;
    stats.approx_kl = sum_kl / stats.minibatches;
    stats.grad_norm = sum_norm / stats.minibatches;
  }
  return stats;
}

}  // namespace dchrl::ppo
