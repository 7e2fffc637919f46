#include <cmath>

#include "dchrl/grad_check.hpp"
#include "dchrl/ppo.hpp"
#include "dchrl/rng.hpp"
#include "doctest.h"

using namespace dchrl;
using namespace dchrl::ppo;

namespace {

// Brute-force lambda-return advantage: direct summation of discounted deltas
// with termination cuts, no recursion.
std::vector<double> gae_brute_force(const std::vector<double>& rewards,
                                    const std::vector<double>& values,
                                    const std::vector<char>& dones, double bootstrap,
                                    double gamma, double lambda) {
  const size_t n = rewards.size();
  std::vector<double> deltas(n);
  for (size_t t = 0; t < n; ++t) {
    const double next_v = t + 1 < n ? values[t + 1] : bootstrap;
    deltas[t] = rewards[t] + gamma * next_v * (dones[t] ? 0.0 : 1.0) - values[t];
  }
  std::vector<double> adv(n, 0.0);
  for (size_t t = 0; t < n; ++t) {
    double weight = 1.0;
    for (size_t k = t; k < n; ++k) {
      adv[t] += weight * deltas[k];
      if (dones[k]) break;
      weight *= gamma * lambda;
    }
  }
  return adv;
}

PolicyInput dense_input(const Vec& x) {
  PolicyInput in;
  in.dense = x;
  return in;
}

}  // namespace

TEST_CASE("masked sampling: single valid goal is certain") {
  std::vector<double> logits{0.3, -2.0, 5.0};
  std::vector<char> mask{0, 1, 0};
  Rng rng(1);
  for (int i = 0; i < 10; ++i) {
    SampleResult s = masked_sample(logits, mask, rng);
    CHECK(s.index == 1);
    CHECK(s.log_prob == 0.0);
  }
}

TEST_CASE("masked softmax: uniform logits spread evenly over valid entries") {
  std::vector<double> logits(50, 1.7);
  std::vector<char> mask(50, 0);
  mask[3] = mask[11] = mask[29] = mask[44] = 1;
  const std::vector<double> probs = masked_softmax(logits, mask);
  for (size_t i = 0; i < probs.size(); ++i) {
    if (mask[i]) {
      CHECK(probs[i] == doctest::Approx(0.25).epsilon(1e-12));
    } else {
      CHECK(probs[i] == 0.0);
    }
  }
}

TEST_CASE("masked sampling frequencies match the analytic distribution") {
  Rng rng(2);
  std::vector<double> logits(50);
  for (double& l : logits) l = rng.next_double(-2.0, 2.0);
  std::vector<char> mask(50, 0);
  for (int i : {2, 7, 13, 21, 34, 48}) mask[i] = 1;
  const std::vector<double> probs = masked_softmax(logits, mask);

  const int n = 100000;
  std::vector<int> counts(50, 0);
  for (int i = 0; i < n; ++i) {
    SampleResult s = masked_sample(logits, mask, rng);
    REQUIRE(mask[s.index] == 1);  // invalid goals are never sampled
    counts[s.index] += 1;
  }
  for (int i = 0; i < 50; ++i) {
    if (!mask[i]) {
      CHECK(counts[i] == 0);
      continue;
    }
    const double sigma = std::sqrt(probs[i] * (1.0 - probs[i]) / n);
    CHECK(std::abs(counts[i] / static_cast<double>(n) - probs[i]) < 3.0 * sigma + 1e-9);
  }
}

TEST_CASE("empty mask is a hard error") {
  std::vector<double> logits{1.0, 2.0};
  std::vector<char> mask{0, 0};
  Rng rng(3);
  CHECK_THROWS_AS(masked_sample(logits, mask, rng), MaskError);
  CHECK_THROWS_AS(masked_argmax(logits, mask), MaskError);
}

TEST_CASE("gae trivial and worked cases") {
  // Single terminal step with zero values: the advantage is the reward.
  CHECK(gae({2.5}, {0.0}, {1}, 0.0, 0.99, 0.95)[0] == 2.5);

  // Worked two-step example.
  const std::vector<double> adv =
      gae({1.0, 0.0}, {0.5, 0.2}, {0, 0}, 0.0, 0.99, 0.95);
  CHECK(adv[1] == doctest::Approx(-0.2).epsilon(1e-12));
  CHECK(adv[0] == doctest::Approx(0.698 + 0.99 * 0.95 * (-0.2)).epsilon(1e-12));
}

TEST_CASE("termination cuts make earlier advantages independent of later entries") {
  std::vector<double> rewards{0.5, 9.0, -3.0};
  std::vector<double> values{0.1, 0.7, 0.3};
  std::vector<char> dones{1, 0, 0};
  const auto a = gae(rewards, values, dones, 0.0, 0.99, 0.95);

  std::vector<double> rewards2 = rewards;
  rewards2[1] = -100.0;
  rewards2[2] = 100.0;
  const auto b = gae(rewards2, values, dones, 5.0, 0.99, 0.95);
  CHECK(a[0] == b[0]);
}

TEST_CASE("gae equals the brute-force lambda-return on random sequences") {
  Rng rng(4);
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
    const auto fast = gae(rewards, values, dones, bootstrap, 0.997, 0.95);
    const auto brute = gae_brute_force(rewards, values, dones, bootstrap, 0.997, 0.95);
    for (size_t i = 0; i < n; ++i) CHECK(fast[i] == doctest::Approx(brute[i]).epsilon(1e-12));
  }
}

TEST_CASE("smdp discounting raises gamma to the macro duration") {
  const std::vector<double> rewards{1.0, 1.0};
  const std::vector<double> values{0.0, 0.0};
  const std::vector<char> dones{0, 1};
  const std::vector<int> durations{3, 1};
  const double gamma = 0.9, lambda = 1.0;
  const auto adv = gae(rewards, values, dones, 0.0, gamma, lambda, &durations);
  // delta_1 = 1; delta_0 = 1 + 0.9^3 * 0 - 0 = 1; A_0 = 1 + 0.9^3 * 1.
  CHECK(adv[1] == 1.0);
  CHECK(adv[0] == doctest::Approx(1.0 + std::pow(gamma, 3)).epsilon(1e-12));
}

TEST_CASE("policy net: batched and single forwards agree") {
  Rng rng(5);
  nn::ParamStore store;
  PolicySpec spec;
  spec.input_dim = 6;
  spec.num_actions = 10;
  spec.pi_hidden = {8};
  spec.v_hidden = {8};
  PolicyValueNet net(spec, "net", store, rng);

  PolicyInput a = dense_input(Vec::LinSpaced(6, -1.0, 1.0));
  PolicyInput b = dense_input(Vec::Constant(6, 0.3));

  nn::Tape tape(false);
  nn::ParamBinder bind(tape, store);
  auto [logits, values] = net.forward(tape, bind, {&a, &b});
  CHECK(tape.val(logits).cols() == 2);
  CHECK(tape.val(values).cols() == 2);

  // forward_one uses the direct inference path; agreement with the batched
  // tape forward is up to kernel rounding.
  auto [la, va] = net.forward_one(store, a);
  CHECK((tape.val(logits).col(0) - la).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(tape.val(values)(0, 0) == doctest::Approx(va).epsilon(1e-12));
}

TEST_CASE("recurrent policy net handles histories") {
  Rng rng(6);
  nn::ParamStore store;
  PolicySpec spec;
  spec.recurrent = true;
  spec.input_dim = 5;
  spec.steps = 4;
  spec.lstm_hidden = 8;
  spec.pi_hidden = {8};
  spec.v_hidden = {8};
  spec.num_actions = 7;
  PolicyValueNet net(spec, "net", store, rng);

  PolicyInput in;
  in.hist = nn::Mat::Random(5, 4);
  in.valid = {0.0, 1.0, 1.0, 1.0};
  auto [logits, value] = net.forward_one(store, in);
  CHECK(logits.size() == 7);
  CHECK(std::isfinite(value));

  // Padded slots do not affect the encoding.
  PolicyInput other = in;
  other.hist.col(0).setConstant(123.0);
  auto [logits2, value2] = net.forward_one(store, other);
  CHECK((logits - logits2).cwiseAbs().maxCoeff() == 0.0);
  CHECK(value == value2);

  // The direct path agrees with the batched tape forward on histories.
  nn::Tape tape(false);
  nn::ParamBinder bind(tape, store);
  auto [tlogits, tvalues] = net.forward(tape, bind, {&in});
  CHECK((tape.val(tlogits).col(0) - logits).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(tape.val(tvalues)(0, 0) == doctest::Approx(value).epsilon(1e-12));
}

namespace {

Rollout make_rollout(PolicyValueNet& net, nn::ParamStore& store, int n, Rng& rng) {
  Rollout rollout;
  for (int i = 0; i < n; ++i) {
    Decision d;
    d.input = dense_input(Vec::Random(net.spec().input_dim));
    d.mask.assign(net.spec().num_actions, 1);
    auto [logits, value] = net.forward_one(store, d.input);
    std::vector<double> lv(logits.data(), logits.data() + logits.size());
    SampleResult s = masked_sample(lv, d.mask, rng);
    d.action = s.index;
    d.log_prob = s.log_prob;
    d.value = value;
    d.reward = rng.next_double(-1.0, 1.0);
    d.done = rng.next_bool(0.1);
    rollout.decisions.push_back(std::move(d));
  }
  rollout.bootstrap_value = 0.0;
  return rollout;
}

}  // namespace

TEST_CASE("ppo update: fresh batch has ratio one and zero clip fraction") {
  Rng rng(7);
  nn::ParamStore store;
  PolicySpec spec;
  spec.input_dim = 4;
  spec.num_actions = 6;
  spec.pi_hidden = {8};
  spec.v_hidden = {8};
  PolicyValueNet net(spec, "net", store, rng);

  Rollout rollout = make_rollout(net, store, 32, rng);
  PpoConfig cfg;
  cfg.epochs = 1;
  cfg.minibatch = 32;  // single minibatch: parameters untouched before the pass
  Rng shuffle(8);
  UpdateStats stats = ppo_update(store, net, rollout, cfg, shuffle);

  CHECK(stats.minibatches == 1);
  CHECK(stats.clip_fraction == 0.0);
  CHECK(std::abs(stats.approx_kl) < 1e-9);
  // With ratio == 1 the surrogate is the normalized advantage; its batch mean
  // is zero by construction.
  CHECK(std::abs(stats.policy_loss) < 1e-9);
}

TEST_CASE("ppo update: zero advantages leave the policy head untouched") {
  Rng rng(9);
  nn::ParamStore store;
  PolicySpec spec;
  spec.input_dim = 4;
  spec.num_actions = 5;
  spec.pi_hidden = {8};
  spec.v_hidden = {8};
  PolicyValueNet net(spec, "net", store, rng);

  Rollout rollout;
  for (int i = 0; i < 16; ++i) {
    Decision d;
    d.input = dense_input(Vec::Random(4));
    d.mask.assign(5, 1);
    auto [logits, value] = net.forward_one(store, d.input);
    std::vector<double> lv(logits.data(), logits.data() + logits.size());
    SampleResult s = masked_sample(lv, d.mask, rng);
    d.action = s.index;
    d.log_prob = s.log_prob;
    d.value = value;
    d.reward = 0.0;  // zero rewards and... values come from the net, so force
    d.value = 0.0;   // zero values: every delta and advantage is exactly 0.
    d.done = 1;
    rollout.decisions.push_back(std::move(d));
  }
  rollout.bootstrap_value = 0.0;

  const nn::Mat pi_before = store.value("net/pi/l0/W");
  const nn::Mat v_before = store.value("net/v/l0/W");

  PpoConfig cfg;
  cfg.epochs = 1;
  cfg.minibatch = 16;
  cfg.ent_coef = 0.0;  // isolate the surrogate term for the policy head
  Rng shuffle(10);
  ppo_update(store, net, rollout, cfg, shuffle);

  CHECK((store.value("net/pi/l0/W") - pi_before).cwiseAbs().maxCoeff() == 0.0);
  CHECK((store.value("net/v/l0/W") - v_before).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("ppo update: fully clipped batch produces zero policy gradient") {
  Rng rng(11);
  nn::ParamStore store;
  PolicySpec spec;
  spec.input_dim = 3;
  spec.num_actions = 4;
  spec.pi_hidden = {6};
  spec.v_hidden = {6};
  PolicyValueNet net(spec, "net", store, rng);

  // Three decisions with raw advantages {2, 1, 0} -> normalized {+, 0, -}.
  // Ratios are forced to 1.5 (clipped high, positive advantage), anything,
  // and 0.5 (clipped low, negative advantage): every surrogate gradient is
  // zero, so with zero value/entropy coefficients nothing moves.
  Rollout rollout;
  const double ratios[3] = {1.5, 1.0, 0.5};
  const double rewards[3] = {2.0, 1.0, 0.0};
  for (int i = 0; i < 3; ++i) {
    Decision d;
    d.input = dense_input(Vec::Random(3));
    d.mask.assign(4, 1);
    auto [logits, value] = net.forward_one(store, d.input);
    std::vector<double> lv(logits.data(), logits.data() + logits.size());
    SampleResult s = masked_sample(lv, d.mask, rng);
    d.action = s.index;
    d.log_prob = s.log_prob - std::log(ratios[i]);  // forces ratio at update time
    d.value = 0.0;
    d.reward = rewards[i];
    d.done = 1;
    rollout.decisions.push_back(std::move(d));
  }
  rollout.bootstrap_value = 0.0;

  std::map<std::string, nn::Mat> before;
  for (const auto& [name, e] : store.all()) before[name] = e.value;

  PpoConfig cfg;
  cfg.epochs = 1;
  cfg.minibatch = 3;
  cfg.ent_coef = 0.0;
  cfg.vf_coef = 0.0;
  Rng shuffle(12);
  UpdateStats stats = ppo_update(store, net, rollout, cfg, shuffle);
  CHECK(stats.clip_fraction == doctest::Approx(2.0 / 3.0));

  for (const auto& [name, e] : store.all()) {
    CHECK((e.value - before[name]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("ppo update: non-finite loss aborts without touching parameters") {
  Rng rng(13);
  nn::ParamStore store;
  PolicySpec spec;
  spec.input_dim = 3;
  spec.num_actions = 4;
  spec.pi_hidden = {6};
  spec.v_hidden = {6};
  PolicyValueNet net(spec, "net", store, rng);

  Rollout rollout = make_rollout(net, store, 8, rng);
  rollout.decisions[3].log_prob = std::numeric_limits<double>::quiet_NaN();

  std::map<std::string, nn::Mat> before;
  for (const auto& [name, e] : store.all()) before[name] = e.value;

  PpoConfig cfg;
  cfg.epochs = 1;
  cfg.minibatch = 8;
  Rng shuffle(14);
  UpdateStats stats = ppo_update(store, net, rollout, cfg, shuffle);
  CHECK(stats.nan_aborted);
  for (const auto& [name, e] : store.all()) {
    CHECK((e.value - before[name]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("finite differences confirm the full ppo loss gradient") {
  Rng rng(15);
  nn::ParamStore store;
  PolicySpec spec;
  spec.input_dim = 4;
  spec.num_actions = 6;
  spec.pi_hidden = {6};
  spec.v_hidden = {6};
  PolicyValueNet net(spec, "net", store, rng);

  const int B = 5;
  std::vector<PolicyInput> inputs(B);
  std::vector<int> actions(B);
  nn::Mat mask = nn::Mat::Zero(6, B);
  nn::Mat adv(1, B), old_logp(1, B), returns(1, B);
  for (int j = 0; j < B; ++j) {
    inputs[j] = dense_input(Vec::Random(4));
    for (int i = 0; i < 6; ++i) mask(i, j) = (i % (j + 2) == 0) ? 1.0 : 0.0;
    mask(j % 6, j) = 1.0;
    actions[j] = j % 6;
    adv(0, j) = rng.next_double(-1.0, 1.0);
    old_logp(0, j) = rng.next_double(-2.0, -0.5);
    returns(0, j) = rng.next_double(-1.0, 1.0);
  }

  auto loss_builder = [&](nn::Tape& t, nn::ParamBinder& b) {
    std::vector<const PolicyInput*> ptrs;
    for (const auto& in : inputs) ptrs.push_back(&in);
    auto [logits, values] = net.forward(t, b, ptrs);
    nn::Value logp_full = t.masked_log_softmax(logits, mask);
    nn::Value logp = t.gather_columns(logp_full, actions);
    nn::Value ratio = t.exp_(t.sub(logp, t.constant(old_logp)));
    nn::Value adv_c = t.constant(adv);
    nn::Value surr = t.min_(t.mul(ratio, adv_c), t.mul(t.clamp(ratio, 0.8, 1.2), adv_c));
    nn::Value policy_loss = t.scale(t.mean_all(surr), -1.0);
    nn::Value verr = t.sub(values, t.constant(returns));
    nn::Value value_loss = t.scale(t.sum_squares(verr), 1.0 / B);
    nn::Value probs = t.exp_(logp_full);
    nn::Value entropy = t.scale(t.scale(t.sum(t.mul(probs, logp_full)), -1.0), 1.0 / B);
    nn::Value total = t.add(policy_loss, t.scale(value_loss, 0.5));
    return t.sub(total, t.scale(entropy, 0.01));
  };

  auto report = nn::check_gradients(store, loss_builder);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_err < 1e-4);
}
