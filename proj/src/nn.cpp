#include "dchrl/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace dchrl::nn {

namespace {
constexpr double kMaskedLogProb = -1e9;
}

// --- Tape ---

int Tape::push(Mat value, bool needs_grad, std::function<void()> back) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = needs_grad && grad_enabled_;
  if (node.needs_grad) node.grad = Mat::Zero(node.value.rows(), node.value.cols());
  node.back = std::move(back);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

Value Tape::leaf(const Mat& v, bool needs_grad) { return Value{push(v, needs_grad)}; }

const Mat& Tape::grad(Value v) const {
  if (!nodes_[v.idx].needs_grad) throw ShapeError("grad requested for a non-gradient node");
  return nodes_[v.idx].grad;
}

Value Tape::matmul(Value a, Value b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.cols() != B.rows()) throw ShapeError("matmul: inner dimensions differ");
  const int out = push(A * B, needs(a) || needs(b));
  if (nodes_[out].needs_grad) {
    nodes_[out].back = [this, a, b, out]() {
      const Mat& g = nodes_[out].grad;
      if (needs(a)) grad_ref(a.idx) += g * val(b).transpose();
      if (needs(b)) grad_ref(b.idx) += val(a).transpose() * g;
    };
  }
  return Value{out};
}

Value Tape::add(Value a, Value b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  const bool broadcast = B.cols() == 1 && A.cols() > 1;
  if (!broadcast && (A.rows() != B.rows() || A.cols() != B.cols()))
    throw ShapeError("add: shape mismatch");
  if (broadcast && A.rows() != B.rows()) throw ShapeError("add: broadcast rows differ");
  Mat result = broadcast ? Mat(A.colwise() + B.col(0)) : Mat(A + B);
  const int out = push(std::move(result), needs(a) || needs(b));
  if (nodes_[out].needs_grad) {
    nodes_[out].back = [this, a, b, out, broadcast]() {
      const Mat& g = nodes_[out].grad;
      if (needs(a)) grad_ref(a.idx) += g;
      if (needs(b)) {
        if (broadcast)
          grad_ref(b.idx) += g.rowwise().sum();
        else
          grad_ref(b.idx) += g;
      }
    };
  }
  return Value{out};
}

Value Tape::sub(Value a, Value b) { return add(a, scale(b, -1.0)); }

Value Tape::mul(Value a, Value b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw ShapeError("mul: shape mismatch");
  const int out = push(A.cwiseProduct(B), needs(a) || needs(b));
  if (nodes_[out].needs_grad) {
    nodes_[out].back = [this, a, b, out]() {
      const Mat& g = nodes_[out].grad;
      if (needs(a)) grad_ref(a.idx) += g.cwiseProduct(val(b));
      if (needs(b)) grad_ref(b.idx) += g.cwiseProduct(val(a));
    };
  }
  return Value{out};
}

Value Tape::scale(Value a, double c) {
  const int out = push(val(a) * c, needs(a));
  if (nodes_[out].needs_grad) {
    nodes_[out].back = [this, a, out, c]() { grad_ref(a.idx) += nodes_[out].grad * c; };
  }
  return Value{out};
}

Value Tape::tanh_(Value a) {
  const int out = push(val(a).array().tanh().matrix(), needs(a));
  if (nodes_[out].needs_grad) {
    nodes_[out].back = [this, a, out]() {
      const Mat& y = nodes_[out].value;
      grad_ref(a.idx) += nodes_[out].grad.cwiseProduct((1.0 - y.array().square()).matrix());
    };
  }
  return Value{out};
}

Value Tape::sigmoid(Value a) {
  Mat y = (1.0 / (1.0 + (-val(a).array()).exp())).matrix();
  const int out = push(std::move(y), needs(a));
  if (nodes_[out].needs_grad) {
    nodes_[out].back = [this, a, out]() {
      const Mat& y = nodes_[out].value;
      grad_ref(a.idx) += nodes_[out].grad.cwiseProduct((y.array() * (1.0 - y.array())).matrix());
    };
  }
  return Value{out};
}

Value Tape::relu(Value a) {
  const int out = push(val(a).cwiseMax(0.0), needs(a));
  if (nodes_[out].needs_grad) {
    nodes_[out].back = [this, a, out]() {
      grad_ref(a.idx) +=
          nodes_[out].grad.cwiseProduct((val(a).array() > 0.0).cast<double>().matrix());
    };
  }
  return Value{out};
}

Value Tape::exp_(Value a) {
  // Strict libm exp: Eigen's vectorized exp clamps extreme inputs instead of
  // underflowing, and masked log-probabilities (-1e9) must map to exactly 0.
  Mat y = val(a).unaryExpr([](double v) { return std::exp(v); });
  const int out = push(std::move(y), needs(a));
  if (nodes_[out].needs_grad) {
    nodes_[out].back = [this, a, out]() {
      grad_ref(a.idx) += nodes_[out].grad.cwiseProduct(nodes_[out].value);
    };
  }
  return Value{out};
}

Value Tape::clamp(Value a, double lo, double hi) {
  const int out = push(val(a).cwiseMax(lo).cwiseMin(hi), needs(a));
  if (nodes_[out].needs_grad) {
    nodes_[out].back = [this, a, out, lo, hi]() {
      const auto inside =
          (val(a).array() >= lo && val(a).array() <= hi).cast<double>().matrix();
      grad_ref(a.idx) += nodes_[out].grad.cwiseProduct(inside);
    };
  }
  return Value{out};
}

Value Tape::min_(Value a, Value b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.rows() != B.rows() || A.cols() != B.cols()) throw ShapeError("min: shape mismatch");
  const int out = push(A.cwiseMin(B), needs(a) || needs(b));
  if (nodes_[out].needs_grad) {
    nodes_[out].back = [this, a, b, out]() {
      // Subgradient: ties go to the first argument.
      const auto pick_a = (val(a).array() <= val(b).array()).cast<double>().matrix();
      const Mat& g = nodes_[out].grad;
      if (needs(a)) grad_ref(a.idx) += g.cwiseProduct(pick_a);
      if (needs(b)) grad_ref(b.idx) += g.cwiseProduct((1.0 - pick_a.array()).matrix());
    };
  }
  return Value{out};
}

Value Tape::sum(Value a) {
  const int out = push(Mat::Constant(1, 1, val(a).sum()), needs(a));
  if (nodes_[out].needs_grad) {
    nodes_[out].back = [this, a, out]() {
      grad_ref(a.idx).array() += nodes_[out].grad(0, 0);
    };
  }
  return Value{out};
}

Value Tape::sum_squares(Value a) {
  const int out = push(Mat::Constant(1, 1, val(a).squaredNorm()), needs(a));
  if (nodes_[out].needs_grad) {
    nodes_[out].back = [this, a, out]() {
      grad_ref(a.idx) += 2.0 * nodes_[out].grad(0, 0) * val(a);
    };
  }
  return Value{out};
}

Value Tape::mean_all(Value a) {
  return scale(sum(a), 1.0 / static_cast<double>(val(a).size()));
}

Value Tape::concat_rows(Value a, Value b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.cols() != B.cols()) throw ShapeError("concat_rows: column counts differ");
  Mat result(A.rows() + B.rows(), A.cols());
  result.topRows(A.rows()) = A;
  result.bottomRows(B.rows()) = B;
  const int out = push(std::move(result), needs(a) || needs(b));
  if (nodes_[out].needs_grad) {
    const int ra = static_cast<int>(A.rows());
    nodes_[out].back = [this, a, b, out, ra]() {
      const Mat& g = nodes_[out].grad;
      if (needs(a)) grad_ref(a.idx) += g.topRows(ra);
      if (needs(b)) grad_ref(b.idx) += g.bottomRows(g.rows() - ra);
    };
  }
  return Value{out};
}

Value Tape::stop_gradient(Value a) { return constant(val(a)); }

Value Tape::scale_columns(Value a, const RowVec& s) {
  const Mat& A = val(a);
  if (A.cols() != s.cols()) throw ShapeError("scale_columns: size mismatch");
  Mat result = A.array().rowwise() * s.array();
  const int out = push(std::move(result), needs(a));
  if (nodes_[out].needs_grad) {
    RowVec sc = s;
    nodes_[out].back = [this, a, out, sc]() {
      grad_ref(a.idx) += (nodes_[out].grad.array().rowwise() * sc.array()).matrix();
    };
  }
  return Value{out};
}

Value Tape::masked_log_softmax(Value logits, const Mat& mask) {
  const Mat& L = val(logits);
  if (L.rows() != mask.rows() || L.cols() != mask.cols())
    throw ShapeError("masked_log_softmax: mask shape mismatch");
  Mat out_val(L.rows(), L.cols());
  for (int j = 0; j < L.cols(); ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < L.rows(); ++i) {
      if (mask(i, j) != 0.0) mx = std::max(mx, L(i, j));
    }
    if (!std::isfinite(mx)) throw ShapeError("masked_log_softmax: empty mask column");
    double z = 0.0;
    for (int i = 0; i < L.rows(); ++i) {
      if (mask(i, j) != 0.0) z += std::exp(L(i, j) - mx);
    }
    const double lse = mx + std::log(z);
    for (int i = 0; i < L.rows(); ++i) {
      out_val(i, j) = mask(i, j) != 0.0 ? L(i, j) - lse : kMaskedLogProb;
    }
  }
  const int out = push(std::move(out_val), needs(logits));
  if (nodes_[out].needs_grad) {
    Mat m = mask;
    nodes_[out].back = [this, logits, out, m]() {
      const Mat& g = nodes_[out].grad;
      const Mat& lp = nodes_[out].value;
      Mat& dl = grad_ref(logits.idx);
      for (int j = 0; j < g.cols(); ++j) {
        double gsum = 0.0;
        for (int i = 0; i < g.rows(); ++i) {
          if (m(i, j) != 0.0) gsum += g(i, j);
        }
        for (int i = 0; i < g.rows(); ++i) {
          if (m(i, j) != 0.0) dl(i, j) += g(i, j) - std::exp(lp(i, j)) * gsum;
        }
      }
    };
  }
  return Value{out};
}

Value Tape::gather_columns(Value a, const std::vector<int>& rows) {
  const Mat& A = val(a);
  if (static_cast<int>(rows.size()) != A.cols())
    throw ShapeError("gather_columns: one row index per column required");
  Mat out_val(1, A.cols());
  for (int j = 0; j < A.cols(); ++j) out_val(0, j) = A(rows[j], j);
  const int out = push(std::move(out_val), needs(a));
  if (nodes_[out].needs_grad) {
    std::vector<int> rr = rows;
    nodes_[out].back = [this, a, out, rr]() {
      const Mat& g = nodes_[out].grad;
      Mat& da = grad_ref(a.idx);
      for (int j = 0; j < g.cols(); ++j) da(rr[j], j) += g(0, j);
    };
  }
  return Value{out};
}

void Tape::backward(Value scalar_loss) {
  if (!grad_enabled_) throw ShapeError("backward on a no-grad tape");
  Node& loss = nodes_[scalar_loss.idx];
  if (loss.value.size() != 1) throw ShapeError("backward: loss must be scalar");
  if (!loss.needs_grad) throw ShapeError("backward: loss does not depend on parameters");
  loss.grad(0, 0) = 1.0;
  for (int i = scalar_loss.idx; i >= 0; --i) {
    if (nodes_[i].needs_grad && nodes_[i].back) nodes_[i].back();
  }
}

// --- ParamStore ---

void ParamStore::add(const std::string& name, Mat init) {
  if (params_.count(name)) throw ShapeError("parameter exists: " + name);
  Entry e;
  e.m = Mat::Zero(init.rows(), init.cols());
  e.v = Mat::Zero(init.rows(), init.cols());
  e.value = std::move(init);
  params_.emplace(name, std::move(e));
}

Mat& ParamStore::value(const std::string& name) { return entry(name).value; }

const Mat& ParamStore::value(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ShapeError("unknown parameter: " + name);
  return it->second.value;
}

ParamStore::Entry& ParamStore::entry(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ShapeError("unknown parameter: " + name);
  return it->second;
}

Value ParamBinder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Value v = tape_.leaf(store_.value(name), true);
  bound_.emplace(name, v);
  return v;
}

std::map<std::string, Mat> ParamBinder::grads() const {
  std::map<std::string, Mat> out;
  for (const auto& [name, v] : bound_) out.emplace(name, tape_.grad(v));
  return out;
}

// --- Adam ---

void adam_step(ParamStore& store, const std::map<std::string, Mat>& grads,
               const AdamConfig& cfg) {
  store.bump_step();
  const double t = static_cast<double>(store.step());
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (const auto& [name, g] : grads) {
    ParamStore::Entry& e = store.entry(name);
    if (g.rows() != e.value.rows() || g.cols() != e.value.cols())
      throw ShapeError("adam: gradient shape mismatch for " + name);
    e.m = cfg.beta1 * e.m + (1.0 - cfg.beta1) * g;
    e.v = cfg.beta2 * e.v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    const Mat m_hat = e.m / bc1;
    const Mat v_hat = e.v / bc2;
    e.value.array() -= cfg.lr * m_hat.array() / (v_hat.array().sqrt() + cfg.eps);
  }
}

double clip_grad_norm(std::map<std::string, Mat>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) sq += g.squaredNorm();
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [name, g] : grads) g *= s;
  }
  return norm;
}

// --- Modules ---

namespace {

Mat uniform_init(int rows, int cols, double bound, Rng& rng) {
  Mat m(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) m(r, c) = rng.next_double(-bound, bound);
  }
  return m;
}

std::string layer_name(const std::string& prefix, int layer, const char* what) {
  return prefix + "/l" + std::to_string(layer) + "/" + what;
}

const char* kGateNames[4] = {"i", "f", "g", "o"};

}  // namespace

void init_mlp(ParamStore& store, const std::string& prefix, const MlpSpec& spec, Rng& rng) {
  int in = spec.input_dim;
  std::vector<int> dims = spec.hidden;
  dims.push_back(spec.output_dim);
  for (size_t l = 0; l < dims.size(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    store.add(layer_name(prefix, static_cast<int>(l), "W"),
              uniform_init(dims[l], in, bound, rng));
    store.add(layer_name(prefix, static_cast<int>(l), "b"),
              uniform_init(dims[l], 1, bound, rng));
    in = dims[l];
  }
}

Value mlp_forward(Tape& tape, ParamBinder& bind, const std::string& prefix, const MlpSpec& spec,
                  Value x) {
  const size_t layers = spec.hidden.size() + 1;
  Value h = x;
  for (size_t l = 0; l < layers; ++l) {
    Value W = bind(layer_name(prefix, static_cast<int>(l), "W"));
    Value b = bind(layer_name(prefix, static_cast<int>(l), "b"));
    h = tape.add(tape.matmul(W, h), b);
    if (l + 1 < layers) {
      h = spec.act == MlpSpec::Act::Tanh ? tape.tanh_(h) : tape.relu(h);
    }
  }
  return h;
}

Vec mlp_apply(const ParamStore& store, const std::string& prefix, const MlpSpec& spec,
              const Vec& x) {
  const size_t layers = spec.hidden.size() + 1;
  Vec h = x;
  for (size_t l = 0; l < layers; ++l) {
    const Mat& W = store.value(layer_name(prefix, static_cast<int>(l), "W"));
    const Mat& b = store.value(layer_name(prefix, static_cast<int>(l), "b"));
    h = W * h + b.col(0);
    if (l + 1 < layers) {
      if (spec.act == MlpSpec::Act::Tanh)
        h = h.array().tanh().matrix();
      else
        h = h.cwiseMax(0.0);
    }
  }
  return h;
}

Vec lstm_apply(const ParamStore& store, const std::string& prefix, const LstmSpec& spec,
               const Mat& xs, const std::vector<double>& valid) {
  const Mat* Wx[4];
  const Mat* Wh[4];
  const Mat* b[4];
  for (int g = 0; g < 4; ++g) {
    Wx[g] = &store.value(prefix + "/Wx_" + kGateNames[g]);
    Wh[g] = &store.value(prefix + "/Wh_" + kGateNames[g]);
    b[g] = &store.value(prefix + "/b_" + kGateNames[g]);
  }
  Vec h = Vec::Zero(spec.hidden_dim), c = Vec::Zero(spec.hidden_dim);
  for (int t = 0; t < xs.cols(); ++t) {
    if (valid[static_cast<size_t>(t)] == 0.0) continue;
    const Vec x = xs.col(t);
    auto gate = [&](int g) -> Vec { return (*Wx[g]) * x + (*Wh[g]) * h + b[g]->col(0); };
    const Vec gi = (1.0 / (1.0 + (-gate(0).array()).exp())).matrix();
    const Vec gf = (1.0 / (1.0 + (-gate(1).array()).exp())).matrix();
    const Vec gg = gate(2).array().tanh().matrix();
    const Vec go = (1.0 / (1.0 + (-gate(3).array()).exp())).matrix();
    c = gf.cwiseProduct(c) + gi.cwiseProduct(gg);
    h = go.cwiseProduct(c.array().tanh().matrix());
  }
  return h;
}

void init_lstm(ParamStore& store, const std::string& prefix, const LstmSpec& spec, Rng& rng) {
  const double bx = 1.0 / std::sqrt(static_cast<double>(spec.input_dim));
  const double bh = 1.0 / std::sqrt(static_cast<double>(spec.hidden_dim));
  for (const char* gate : kGateNames) {
    store.add(prefix + "/Wx_" + gate, uniform_init(spec.hidden_dim, spec.input_dim, bx, rng));
    store.add(prefix + "/Wh_" + gate, uniform_init(spec.hidden_dim, spec.hidden_dim, bh, rng));
    Mat b = Mat::Zero(spec.hidden_dim, 1);
    if (std::string(gate) == "f") b.setOnes();  // forget-gate bias 1
    store.add(prefix + "/b_" + gate, b);
  }
}

Value lstm_forward(Tape& tape, ParamBinder& bind, const std::string& prefix, const LstmSpec& spec,
                   const std::vector<Value>& xs, const std::vector<RowVec>& valid) {
  if (xs.empty()) throw ShapeError("lstm_forward: empty sequence");
  if (valid.size() != xs.size()) throw ShapeError("lstm_forward: validity length mismatch");
  const int batch = static_cast<int>(tape.val(xs[0]).cols());

  Value Wx[4], Wh[4], b[4];
  for (int g = 0; g < 4; ++g) {
    Wx[g] = bind(prefix + "/Wx_" + kGateNames[g]);
    Wh[g] = bind(prefix + "/Wh_" + kGateNames[g]);
    b[g] = bind(prefix + "/b_" + kGateNames[g]);
  }

  Value h = tape.constant(Mat::Zero(spec.hidden_dim, batch));
  Value c = tape.constant(Mat::Zero(spec.hidden_dim, batch));

  for (size_t t = 0; t < xs.size(); ++t) {
    auto gate_pre = [&](int g) {
      return tape.add(tape.add(tape.matmul(Wx[g], xs[t]), tape.matmul(Wh[g], h)), b[g]);
    };
    Value gi = tape.sigmoid(gate_pre(0));
    Value gf = tape.sigmoid(gate_pre(1));
    Value gg = tape.tanh_(gate_pre(2));
    Value go = tape.sigmoid(gate_pre(3));
    Value c_new = tape.add(tape.mul(gf, c), tape.mul(gi, gg));
    Value h_new = tape.mul(go, tape.tanh_(c_new));

    RowVec keep = RowVec::Ones(batch) - valid[t];
    c = tape.add(tape.scale_columns(c_new, valid[t]), tape.scale_columns(c, keep));
    h = tape.add(tape.scale_columns(h_new, valid[t]), tape.scale_columns(h, keep));
  }
  return h;
}

// --- Checkpoints ---

namespace {

constexpr uint32_t kMagic = 0x4b504344;  // "DCPK"
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); }
void write_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<char*>(&v), 8); }
void write_string(std::ostream& os, const std::string& s) {
  write_u32(os, static_cast<uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
uint32_t read_u32(std::istream& is) {
  uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
uint64_t read_u64(std::istream& is) {
  uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
std::string read_string(std::istream& is) {
  const uint32_t n = read_u32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}
void write_tensor(std::ostream& os, const std::string& name, const Mat& m) {
  write_string(os, name);
  write_u64(os, static_cast<uint64_t>(m.rows()));
  write_u64(os, static_cast<uint64_t>(m.cols()));
  os.write(reinterpret_cast<const char*>(m.data()),
           static_cast<std::streamsize>(sizeof(double) * m.size()));
}
Mat read_tensor_data(std::istream& is) {
  const uint64_t rows = read_u64(is);
  const uint64_t cols = read_u64(is);
  Mat m(rows, cols);
  is.read(reinterpret_cast<char*>(m.data()),
          static_cast<std::streamsize>(sizeof(double) * m.size()));
  return m;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const std::map<std::string, std::string>& meta) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  write_u32(os, kMagic);
  write_u32(os, kVersion);
  write_u32(os, static_cast<uint32_t>(meta.size()));
  for (const auto& [k, v] : meta) {
    write_string(os, k);
    write_string(os, v);
  }
  write_u64(os, static_cast<uint64_t>(store.step()));
  write_u32(os, static_cast<uint32_t>(store.all().size()));
  for (const auto& [name, e] : store.all()) {
    write_tensor(os, name, e.value);
    write_tensor(os, name + "!m", e.m);
    write_tensor(os, name + "!v", e.v);
  }
}

ParamStore load_checkpoint(const std::string& path, std::map<std::string, std::string>* meta_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
  if (read_u32(is) != kMagic) throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t version = read_u32(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const uint32_t meta_n = read_u32(is);
  std::map<std::string, std::string> meta;
  for (uint32_t i = 0; i < meta_n; ++i) {
    std::string k = read_string(is);
    meta[k] = read_string(is);
  }
  if (meta_out) *meta_out = meta;

  ParamStore store;
  store.set_step(static_cast<int64_t>(read_u64(is)));
  const uint32_t count = read_u32(is);
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = read_string(is);
    Mat value = read_tensor_data(is);
    std::string name_m = read_string(is);
    Mat m = read_tensor_data(is);
    std::string name_v = read_string(is);
    Mat v = read_tensor_data(is);
    if (name_m != name + "!m" || name_v != name + "!v")
      throw std::runtime_error("checkpoint: corrupt tensor block for " + name);
    store.add(name, std::move(value));
    store.entry(name).m = std::move(m);
    store.entry(name).v = std::move(v);
  }
  if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
  return store;
}

}  // namespace dchrl::nn
