#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "dchrl/rng.hpp"

namespace dchrl::nn {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using RowVec = Eigen::RowVectorXd;

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Handle into a Tape node.
struct Value {
  int idx = -1;
  bool valid() const { return idx >= 0; }
};

// Reverse-mode tape over matrix values. Columns are batch samples. The tape
// covers exactly the operations the encoder, policy, value, reward and
// transition networks need; it is not a general autodiff system.
class Tape {
 public:
  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Value leaf(const Mat& v, bool needs_grad);
  Value constant(const Mat& v) { return leaf(v, false); }
  Value constant(double v) { return leaf(Mat::Constant(1, 1, v), false); }

  const Mat& val(Value v) const { return nodes_[v.idx].value; }
  const Mat& grad(Value v) const;

  Value matmul(Value a, Value b);
  Value add(Value a, Value b);  // same shape, or b a column vector broadcast over a's columns
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);  // elementwise
  Value scale(Value a, double c);
  Value tanh_(Value a);
  Value sigmoid(Value a);
  Value relu(Value a);
  Value exp_(Value a);
  Value clamp(Value a, double lo, double hi);
  Value min_(Value a, Value b);
  Value sum(Value a);          // 1x1
  Value sum_squares(Value a);  // 1x1
  Value mean_all(Value a);     // 1x1
  Value concat_rows(Value a, Value b);
  Value stop_gradient(Value a);
  // Per-column scale by a constant row vector (sequence validity masking).
  Value scale_columns(Value a, const RowVec& s);
  // Column-wise log softmax restricted to mask!=0 entries; masked entries
  // output -1e9 (so exp() underflows to exactly 0) and receive zero gradient.
  Value masked_log_softmax(Value logits, const Mat& mask);
  // out(0, j) = a(rows[j], j).
  Value gather_columns(Value a, const std::vector<int>& rows);

  void backward(Value scalar_loss);
  size_t size() const { return nodes_.size(); }
  bool grad_enabled() const { return grad_enabled_; }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    std::function<void()> back;
  };

  int push(Mat value, bool needs_grad, std::function<void()> back = nullptr);
  Mat& grad_ref(int idx) { return nodes_[idx].grad; }
  bool needs(Value v) const { return nodes_[v.idx].needs_grad; }

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

// --- Parameters ---

// Named parameter tensors plus per-parameter Adam moments. Single writer;
// forward passes read values in place.
class ParamStore {
 public:
  struct Entry {
    Mat value;
    Mat m;
    Mat v;
  };

  void add(const std::string& name, Mat init);
  bool has(const std::string& name) const { return params_.count(name) != 0; }
  Mat& value(const std::string& name);
  const Mat& value(const std::string& name) const;
  Entry& entry(const std::string& name);
  const std::map<std::string, Entry>& all() const { return params_; }
  std::map<std::string, Entry>& all() { return params_; }
  int64_t step() const { return step_; }
  void set_step(int64_t s) { step_ = s; }
  void bump_step() { ++step_; }

 private:
  std::map<std::string, Entry> params_;
  int64_t step_ = 0;
};

// Binds store parameters as tape leaves, one leaf per parameter, so gradient
// contributions from repeated use (e.g. LSTM weights across timesteps)
// accumulate on a single node.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, ParamStore& store) : tape_(tape), store_(store) {}

  Value operator()(const std::string& name);
  // Gradients for every bound parameter, keyed by name. Call after backward().
  std::map<std::string, Mat> grads() const;

 private:
  Tape& tape_;
  ParamStore& store_;
  std::map<std::string, Value> bound_;
};

// --- Optimizer ---

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam with bias correction; one call = one optimization step over
// the given gradients. Parameters without a gradient entry are untouched.
void adam_step(ParamStore& store, const std::map<std::string, Mat>& grads, const AdamConfig& cfg);

// Global L2 norm across all gradients; rescales in place when above max_norm.
// Returns the pre-clip norm.
double clip_grad_norm(std::map<std::string, Mat>& grads, double max_norm);

// --- Modules ---

struct MlpSpec {
  int input_dim = 0;
  std::vector<int> hidden;
  int output_dim = 0;
  enum class Act { Tanh, Relu } act = Act::Tanh;  // hidden activation; output is linear
};

struct LstmSpec {
  int input_dim = 0;
  int hidden_dim = 0;
};

// Uniform fan-in initialization: U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for
// weights and biases.
void init_mlp(ParamStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng);

// Same per-gate fan-in scaling; forget gate bias starts at 1.
void init_lstm(ParamStore& store, const std::string& prefix, const LstmSpec& spec, Rng& rng);

Value mlp_forward(Tape& tape, ParamBinder& bind, const std::string& prefix, const MlpSpec& spec,
                  Value x);

// Direct single-sample inference that reads parameters in place (no tape,
// no gradients). Matches mlp_forward up to batched-vs-single kernel rounding.
Vec mlp_apply(const ParamStore& store, const std::string& prefix, const MlpSpec& spec,
              const Vec& x);

// Runs the LSTM over a sequence of (input_dim x batch) steps, oldest first.
// valid[t] is a 0/1 row per sample: on invalid (padded) steps the hidden and
// cell state carry through unchanged, so left-padded histories encode
// identically regardless of pad content. Returns the final hidden state.
Value lstm_forward(Tape& tape, ParamBinder& bind, const std::string& prefix, const LstmSpec& spec,
                   const std::vector<Value>& xs, const std::vector<RowVec>& valid);

// Direct single-sequence inference; xs columns are steps, oldest first.
// Invalid steps carry the state through unchanged.
Vec lstm_apply(const ParamStore& store, const std::string& prefix, const LstmSpec& spec,
               const Mat& xs, const std::vector<double>& valid);

// --- Checkpoints ---

// Binary named-tensor container (version tag, shape headers, little-endian
// doubles, column-major). Adam moments and the step counter ride along so
// training can resume.
void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::map<std::string, std::string>& meta);
ParamStore load_checkpoint(const std::string& path, std::map<std::string, std::string>* meta_out);

}  // namespace dchrl::nn
