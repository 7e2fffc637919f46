#pragma once

#include <ostream>

#include "dchrl/rng.hpp"

namespace dchrl {

struct VerifyOptions {
  uint64_t seed = 2024;
  int gridworlds = 20;   // random instances for the gamma=1 equality
  int windows = 200;     // random windows for planner optimality
  int grad_points = 5;   // random parameter points per gradient check
};

// Runs the oracle property suite (appendix equality, bisimulation partition,
// planner optimality, gradient and GAE checks), printing one line per
// property with check counts and runtimes. Returns the number of failed
// properties.
int run_verify_suite(std::ostream& out, const VerifyOptions& options = {});

}  // namespace dchrl
