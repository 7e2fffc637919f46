#include <cmath>
#include <cstdio>

#include "dchrl/grad_check.hpp"
#include "dchrl/nn.hpp"
#include "dchrl/rng.hpp"
#include "doctest.h"

using namespace dchrl;
using namespace dchrl::nn;

namespace {

// Straightforward loop-based re-implementations used as dual oracles.
std::vector<double> naive_mlp(const ParamStore& store, const std::string& prefix,
                              const MlpSpec& spec, std::vector<double> x) {
  std::vector<int> dims = spec.hidden;
  dims.push_back(spec.output_dim);
  for (size_t l = 0; l < dims.size(); ++l) {
    const Mat& W = store.value(prefix + "/l" + std::to_string(l) + "/W");
    const Mat& b = store.value(prefix + "/l" + std::to_string(l) + "/b");
    std::vector<double> y(dims[l], 0.0);
    for (int i = 0; i < dims[l]; ++i) {
      double acc = b(i, 0);
      for (size_t j = 0; j < x.size(); ++j) acc += W(i, static_cast<int>(j)) * x[j];
      y[i] = (l + 1 < dims.size()) ? std::tanh(acc) : acc;
    }
    x = std::move(y);
  }
  return x;
}

std::vector<double> naive_lstm(const ParamStore& store, const std::string& prefix,
                               const LstmSpec& spec,
                               const std::vector<std::vector<double>>& seq) {
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  std::vector<double> h(spec.hidden_dim, 0.0), c(spec.hidden_dim, 0.0);
  for (const auto& x : seq) {
    auto gate = [&](const char* g, int i) {
      const Mat& Wx = store.value(prefix + "/Wx_" + g);
      const Mat& Wh = store.value(prefix + "/Wh_" + g);
      const Mat& b = store.value(prefix + "/b_" + g);
      double acc = b(i, 0);
      for (size_t j = 0; j < x.size(); ++j) acc += Wx(i, static_cast<int>(j)) * x[j];
      for (int j = 0; j < spec.hidden_dim; ++j) acc += Wh(i, j) * h[j];
      return acc;
    };
    std::vector<double> hn(spec.hidden_dim), cn(spec.hidden_dim);
    for (int i = 0; i < spec.hidden_dim; ++i) {
      const double gi = sig(gate("i", i));
      const double gf = sig(gate("f", i));
      const double gg = std::tanh(gate("g", i));
      const double go = sig(gate("o", i));
      cn[i] = gf * c[i] + gi * gg;
      hn[i] = go * std::tanh(cn[i]);
    }
    h = hn;
    c = cn;
  }
  return h;
}

Mat random_mat(int rows, int cols, Rng& rng, double scale = 1.0) {
  Mat m(rows, cols);
  for (int c = 0; c < cols; ++c)
    for (int r = 0; r < rows; ++r) m(r, c) = rng.next_double(-scale, scale);
  return m;
}

}  // namespace

TEST_CASE("mlp: zero parameters give zero output") {
  ParamStore store;
  MlpSpec spec{3, {4}, 2, MlpSpec::Act::Tanh};
  store.add("net/l0/W", Mat::Zero(4, 3));
  store.add("net/l0/b", Mat::Zero(4, 1));
  store.add("net/l1/W", Mat::Zero(2, 4));
  store.add("net/l1/b", Mat::Zero(2, 1));

  Tape tape(false);
  ParamBinder bind(tape, store);
  Value y = mlp_forward(tape, bind, "net", spec, tape.constant(Mat::Ones(3, 1)));
  CHECK(tape.val(y).isZero(0.0));
}

TEST_CASE("mlp: identity single layer is the identity") {
  ParamStore store;
  MlpSpec spec{3, {}, 3};
  store.add("id/l0/W", Mat::Identity(3, 3));
  store.add("id/l0/b", Mat::Zero(3, 1));

  Rng rng(2);
  Mat x = random_mat(3, 5, rng);
  Tape tape(false);
  ParamBinder bind(tape, store);
  Value y = mlp_forward(tape, bind, "id", spec, tape.constant(x));
  CHECK((tape.val(y) - x).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mlp matches a loop-based dual implementation") {
  Rng rng(3);
  ParamStore store;
  MlpSpec spec{5, {7, 6}, 4, MlpSpec::Act::Tanh};
  init_mlp(store, "net", spec, rng);

  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(5);
    for (double& v : x) v = rng.next_double(-2.0, 2.0);
    Mat xm(5, 1);
    for (int i = 0; i < 5; ++i) xm(i, 0) = x[i];

    Tape tape(false);
    ParamBinder bind(tape, store);
    const Mat y = tape.val(mlp_forward(tape, bind, "net", spec, tape.constant(xm)));
    const std::vector<double> ref = naive_mlp(store, "net", spec, x);
    for (int i = 0; i < 4; ++i) CHECK(y(i, 0) == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("lstm: zero parameters and inputs keep the hidden state at zero") {
  ParamStore store;
  LstmSpec spec{3, 4};
  for (const char* g : {"i", "f", "g", "o"}) {
    store.add(std::string("z/Wx_") + g, Mat::Zero(4, 3));
    store.add(std::string("z/Wh_") + g, Mat::Zero(4, 4));
    store.add(std::string("z/b_") + g, Mat::Zero(4, 1));
  }
  Tape tape(false);
  ParamBinder bind(tape, store);
  std::vector<Value> xs(6, tape.constant(Mat::Zero(3, 2)));
  std::vector<RowVec> valid(6, RowVec::Ones(2));
  Value h = lstm_forward(tape, bind, "z", spec, xs, valid);
  CHECK(tape.val(h).isZero(0.0));
}

TEST_CASE("lstm matches a loop-based dual implementation") {
  Rng rng(4);
  ParamStore store;
  LstmSpec spec{4, 5};
  init_lstm(store, "lstm", spec, rng);

  for (int len : {1, 2, 7}) {
    std::vector<std::vector<double>> seq(len, std::vector<double>(4));
    for (auto& x : seq)
      for (double& v : x) v = rng.next_double(-1.5, 1.5);

    Tape tape(false);
    ParamBinder bind(tape, store);
    std::vector<Value> xs;
    std::vector<RowVec> valid;
    for (const auto& x : seq) {
      Mat xm(4, 1);
      for (int i = 0; i < 4; ++i) xm(i, 0) = x[i];
      xs.push_back(tape.constant(xm));
      valid.push_back(RowVec::Ones(1));
    }
    const Mat h = tape.val(lstm_forward(tape, bind, "lstm", spec, xs, valid));
    const std::vector<double> ref = naive_lstm(store, "lstm", spec, seq);
    for (int i = 0; i < 5; ++i) CHECK(h(i, 0) == doctest::Approx(ref[i]).epsilon(1e-12));
  }
}

TEST_CASE("lstm ignores padded steps") {
  Rng rng(5);
  ParamStore store;
  LstmSpec spec{3, 4};
  init_lstm(store, "pad", spec, rng);

  auto encode = [&](const Mat& pad_content) {
    Tape tape(false);
    ParamBinder bind(tape, store);
    std::vector<Value> xs{tape.constant(pad_content), tape.constant(Mat::Ones(3, 1)),
                          tape.constant(Mat::Constant(3, 1, 0.5))};
    std::vector<RowVec> valid{RowVec::Zero(1), RowVec::Ones(1), RowVec::Ones(1)};
    return tape.val(lstm_forward(tape, bind, "pad", spec, xs, valid));
  };

  const Mat a = encode(Mat::Zero(3, 1));
  const Mat b = encode(Mat::Constant(3, 1, 42.0));
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("backward: quadratic loss gradient matches the closed form") {
  // loss = 0.5 * ||W x||^2  =>  dL/dW = (W x) x^T
  Rng rng(6);
  ParamStore store;
  store.add("q/W", random_mat(3, 4, rng));
  Mat x = random_mat(4, 1, rng);

  Tape tape;
  ParamBinder bind(tape, store);
  Value Wx = tape.matmul(bind("q/W"), tape.constant(x));
  Value loss = tape.scale(tape.sum_squares(Wx), 0.5);
  tape.backward(loss);

  const Mat expect = (store.value("q/W") * x) * x.transpose();
  CHECK((bind.grads().at("q/W") - expect).cwiseAbs().maxCoeff() < 1e-12);

  // At W = 0 the gradient vanishes.
  store.value("q/W").setZero();
  Tape t2;
  ParamBinder b2(t2, store);
  Value loss2 = t2.scale(t2.sum_squares(t2.matmul(b2("q/W"), t2.constant(x))), 0.5);
  t2.backward(loss2);
  CHECK(b2.grads().at("q/W").isZero(0.0));
}

TEST_CASE("finite differences confirm mlp and lstm gradients") {
  Rng rng(7);

  for (int point = 0; point < 5; ++point) {
    ParamStore store;
    MlpSpec spec{4, {6}, 3, MlpSpec::Act::Tanh};
    init_mlp(store, "net", spec, rng);
    Mat x = random_mat(4, 3, rng);
    Mat target = random_mat(3, 3, rng);

    auto loss = [&](Tape& t, ParamBinder& b) {
      Value y = mlp_forward(t, b, "net", spec, t.constant(x));
      return t.mean_all(t.sum_squares(t.sub(y, t.constant(target))));
    };
    auto report = check_gradients(store, loss);
    CAPTURE(report.worst_param);
    CHECK(report.max_rel_err < 1e-4);
  }

  for (int point = 0; point < 3; ++point) {
    ParamStore store;
    LstmSpec spec{3, 4};
    init_lstm(store, "lstm", spec, rng);
    std::vector<Mat> seq;
    for (int t = 0; t < 5; ++t) seq.push_back(random_mat(3, 2, rng));

    auto loss = [&](Tape& t, ParamBinder& b) {
      std::vector<Value> xs;
      std::vector<RowVec> valid;
      for (const auto& x : seq) {
        xs.push_back(t.constant(x));
        valid.push_back(RowVec::Ones(2));
      }
      Value h = lstm_forward(t, b, "lstm", spec, xs, valid);
      return t.mean_all(t.sum_squares(h));
    };
    auto report = check_gradients(store, loss);
    CAPTURE(report.worst_param);
    CHECK(report.max_rel_err < 1e-4);
  }
}

TEST_CASE("finite differences confirm masked softmax, clamp, min, gather") {
  Rng rng(8);
  ParamStore store;
  store.add("logits/W", random_mat(6, 4, rng));

  Mat x = random_mat(4, 3, rng);
  Mat mask = Mat::Zero(6, 3);
  for (int j = 0; j < 3; ++j) {
    mask(j, j) = 1;
    mask(3, j) = 1;
    mask(5, j) = 1;
  }
  std::vector<int> picks{0, 3, 5};
  Mat adv(1, 3);
  adv << 0.7, -1.2, 0.4;

  auto loss = [&](Tape& t, ParamBinder& b) {
    Value logits = t.matmul(b("logits/W"), t.constant(x));
    Value logp = t.masked_log_softmax(logits, mask);
    Value chosen = t.gather_columns(logp, picks);
    Value ratio = t.exp_(t.sub(chosen, t.constant(Mat::Constant(1, 3, -1.0))));
    Value clipped = t.clamp(ratio, 0.8, 1.2);
    Value surr = t.min_(t.mul(ratio, t.constant(adv)), t.mul(clipped, t.constant(adv)));
    Value p = t.exp_(logp);
    Value entropy = t.scale(t.sum(t.mul(p, logp)), -1.0);
    return t.sub(t.scale(t.mean_all(surr), -1.0), t.scale(entropy, 0.01));
  };
  auto report = check_gradients(store, loss);
  CAPTURE(report.worst_param);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("masked probabilities are exactly zero off-mask and sum to one") {
  Rng rng(9);
  Mat logits = random_mat(8, 4, rng, 3.0);
  Mat mask = Mat::Zero(8, 4);
  for (int j = 0; j < 4; ++j)
    for (int i = 0; i < 8; ++i) mask(i, j) = (i % (j + 2) == 0) ? 1.0 : 0.0;

  Tape tape(false);
  Value lp = tape.masked_log_softmax(tape.constant(logits), mask);
  const Mat p = tape.val(tape.exp_(lp));
  for (int j = 0; j < 4; ++j) {
    double total = 0.0;
    for (int i = 0; i < 8; ++i) {
      if (mask(i, j) == 0.0) {
        CHECK(p(i, j) == 0.0);
      } else {
        total += p(i, j);
      }
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("adam: zero gradients leave parameters unchanged") {
  Rng rng(10);
  ParamStore store;
  store.add("p", random_mat(3, 3, rng));
  const Mat before = store.value("p");
  std::map<std::string, Mat> grads{{"p", Mat::Zero(3, 3)}};
  adam_step(store, grads, AdamConfig{});
  CHECK((store.value("p") - before).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("adam: first step moves by about lr under a constant gradient") {
  ParamStore store;
  store.add("p", Mat::Zero(2, 2));
  std::map<std::string, Mat> grads{{"p", Mat::Constant(2, 2, 3.7)}};
  AdamConfig cfg;
  cfg.lr = 1e-3;
  adam_step(store, grads, cfg);
  // Bias-corrected first step is lr * g / (|g| + eps) = lr * sign(g).
  CHECK(store.value("p")(0, 0) == doctest::Approx(-1e-3).epsilon(1e-6));
}

TEST_CASE("adam: loss on a convex quadratic decreases") {
  Rng rng(11);
  ParamStore store;
  store.add("p", random_mat(4, 1, rng, 2.0));
  Mat target = random_mat(4, 1, rng, 2.0);

  AdamConfig cfg;
  cfg.lr = 0.05;
  auto loss_of = [&](const Mat& p) { return (p - target).squaredNorm(); };
  const double initial = loss_of(store.value("p"));
  double final_loss = initial;
  for (int i = 0; i < 100; ++i) {
    std::map<std::string, Mat> grads{{"p", 2.0 * (store.value("p") - target)}};
    adam_step(store, grads, cfg);
    final_loss = loss_of(store.value("p"));
  }
  CHECK(final_loss < 0.05 * initial);
}

TEST_CASE("gradient norm clipping rescales only above the threshold") {
  std::map<std::string, Mat> grads{{"a", Mat::Constant(2, 2, 3.0)},
                                   {"b", Mat::Constant(1, 2, -4.0)}};
  const double norm = std::sqrt(4 * 9.0 + 2 * 16.0);
  std::map<std::string, Mat> clipped = grads;
  CHECK(clip_grad_norm(clipped, 1.0) == doctest::Approx(norm));
  double after = 0.0;
  for (auto& [k, g] : clipped) after += g.squaredNorm();
  CHECK(std::sqrt(after) == doctest::Approx(1.0));

  std::map<std::string, Mat> small{{"a", Mat::Constant(1, 1, 0.1)}};
  clip_grad_norm(small, 1.0);
  CHECK(small.at("a")(0, 0) == 0.1);
}

TEST_CASE("checkpoints round-trip parameters, moments, step and metadata") {
  Rng rng(12);
  ParamStore store;
  store.add("x/W", random_mat(3, 5, rng));
  store.add("y/b", random_mat(4, 1, rng));
  store.entry("x/W").m = random_mat(3, 5, rng, 0.1);
  store.entry("x/W").v = random_mat(3, 5, rng, 0.01).cwiseAbs();
  store.set_step(77);

  const std::string path = "test_ckpt.bin";
  save_checkpoint(path, store, {{"env", "doorkey"}, {"method", "dchrl"}});

  std::map<std::string, std::string> meta;
  ParamStore loaded = load_checkpoint(path, &meta);
  CHECK(meta.at("env") == "doorkey");
  CHECK(meta.at("method") == "dchrl");
  CHECK(loaded.step() == 77);
  CHECK((loaded.value("x/W") - store.value("x/W")).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.entry("x/W").m - store.entry("x/W").m).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.entry("x/W").v - store.entry("x/W").v).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.value("y/b") - store.value("y/b")).cwiseAbs().maxCoeff() == 0.0);
  std::remove(path.c_str());
}

TEST_CASE("initialization is reproducible per seed") {
  MlpSpec spec{4, {5}, 2};
  ParamStore a, b;
  Rng ra(99), rb(99);
  init_mlp(a, "n", spec, ra);
  init_mlp(b, "n", spec, rb);
  CHECK((a.value("n/l0/W") - b.value("n/l0/W")).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.value("n/l1/W") - b.value("n/l1/W")).cwiseAbs().maxCoeff() == 0.0);
}
