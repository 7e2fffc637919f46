#pragma once

#include <functional>
#include <string>

#include "dchrl/nn.hpp"

namespace dchrl::nn {

using LossBuilder = std::function<Value(Tape&, ParamBinder&)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  int coords_checked = 0;
};

// Central finite differences against the tape's reverse-mode gradients for
// every coordinate of every parameter the loss touches. Relative error uses
// |analytic - fd| / max(|analytic| + |fd|, 1e-3), which degrades to an
// absolute 1e-7 bound for near-zero gradients.
inline GradCheckReport check_gradients(ParamStore& store, const LossBuilder& build,
                                       double h = 1e-5) {
  GradCheckReport report;

  Tape tape;
  ParamBinder bind(tape, store);
  Value loss = build(tape, bind);
  tape.backward(loss);
  const std::map<std::string, Mat> analytic = bind.grads();

  auto loss_value = [&]() {
    Tape t(false);
    ParamBinder b(t, store);
    return t.val(build(t, b))(0, 0);
  };

  for (const auto& [name, grad] : analytic) {
    Mat& theta = store.value(name);
    for (int c = 0; c < theta.cols(); ++c) {
      for (int r = 0; r < theta.rows(); ++r) {
        const double saved = theta(r, c);
        theta(r, c) = saved + h;
        const double up = loss_value();
        theta(r, c) = saved - h;
        const double down = loss_value();
        theta(r, c) = saved;

        const double fd = (up - down) / (2.0 * h);
        const double a = grad(r, c);
        const double err = std::abs(a - fd) / std::max(std::abs(a) + std::abs(fd), 1e-3);
        ++report.coords_checked;
        if (err > report.max_rel_err) {
          report.max_rel_err = err;
          report.worst_param = name;
        }
      }
    }
  }
  return report;
}

}  // namespace dchrl::nn
