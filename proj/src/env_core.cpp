#include "dchrl/env_core.hpp"

namespace dchrl {

std::vector<int> extract_window(const GridState& s, int W, int wall_code,
                                const std::vector<int>& full_codes) {
  std::vector<int> out(static_cast<size_t>(W) * W, wall_code);
  const int half = W / 2;
  for (int dr = -half; dr <= half; ++dr) {
    for (int dc = -half; dc <= half; ++dc) {
      const int r = s.agent_row + dr;
      const int c = s.agent_col + dc;
      if (!s.in_bounds(r, c)) continue;
      out[static_cast<size_t>(dr + half) * W + (dc + half)] =
          full_codes[static_cast<size_t>(r) * s.width + c];
    }
  }
  return out;
}

std::vector<double> observation_features(const Observation& obs, int num_codes) {
  std::vector<double> f;
  f.reserve(obs.window.size() + obs.inventory.size());
  const double scale = 1.0 / static_cast<double>(num_codes);
  for (int code : obs.window) f.push_back(code * scale);
  f.insert(f.end(), obs.inventory.begin(), obs.inventory.end());
  return f;
}

}  // namespace dchrl
