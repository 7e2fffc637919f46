#include "dchrl/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

namespace dchrl {

const char* method_name(Method m) {
  switch (m) {
    case Method::PPO: return "ppo";
    case Method::DcHRL: return "dchrl";
    case Method::DcHRLSA: return "dchrl_sa";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  if (name == "ppo") return Method::PPO;
  if (name == "dchrl") return Method::DcHRL;
  if (name == "dchrl_sa") return Method::DcHRLSA;
  throw ConfigError("unknown method: " + name + " (expected ppo|dchrl|dchrl_sa)");
}

int ExperimentConfig::resolved_max_steps() const {
  if (max_steps > 0) return max_steps;
  return env == "doorkey" ? 512 : 1152;
}

int ExperimentConfig::resolved_dim_z() const {
  if (dim_z > 0) return dim_z;
  if (env == "doorkey") return 60;
  return mode == ObsMode::FullMap ? 25 : 40;
}

void ExperimentConfig::validate() const {
  if (env != "doorkey" && env != "multiitem")
    throw ConfigError("env must be doorkey or multiitem, got: " + env);
  if (env == "doorkey" && mode != ObsMode::Egocentric)
    throw ConfigError("doorkey supports only pomdp mode (egocentric window)");
  if (window < 3 || window % 2 == 0) throw ConfigError("window must be odd and >= 3");
  if (bs < 1 || rollout < 1 || bs > rollout)
    throw ConfigError("need 1 <= bs <= rollout");
  if (history_l < 1) throw ConfigError("l must be >= 1");
  if (seeds.empty()) throw ConfigError("seeds must not be empty");
  if (budget < 1) throw ConfigError("budget must be positive");
  if (eval_episodes < 0 || eval_every < 1) throw ConfigError("bad eval settings");
}

namespace {

bool parse_bool(const std::string& v) {
  if (v == "1" || v == "true") return true;
  if (v == "0" || v == "false") return false;
  throw ConfigError("expected boolean 0/1, got: " + v);
}

std::vector<uint64_t> parse_seed_list(const std::string& v) {
  std::vector<uint64_t> seeds;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) seeds.push_back(std::stoull(item));
  }
  return seeds;
}

std::string seeds_to_string(const std::vector<uint64_t>& seeds) {
  std::string out;
  for (size_t i = 0; i < seeds.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(seeds[i]);
  }
  return out;
}

}  // namespace

void ExperimentConfig::apply_override(const std::string& key, const std::string& value) {
  using Setter = std::function<void(ExperimentConfig&, const std::string&)>;
  static const std::map<std::string, Setter> setters = {
      {"env", [](auto& c, const auto& v) { c.env = v; }},
      {"mode",
       [](auto& c, const auto& v) {
         if (v == "mdp") c.mode = ObsMode::FullMap;
         else if (v == "pomdp") c.mode = ObsMode::Egocentric;
         else throw ConfigError("mode must be mdp or pomdp, got: " + v);
       }},
      {"method", [](auto& c, const auto& v) { c.method = method_from_name(v); }},
      {"grid_size", [](auto& c, const auto& v) { c.grid_size = std::stoi(v); }},
      {"window", [](auto& c, const auto& v) { c.window = std::stoi(v); }},
      {"num_keys", [](auto& c, const auto& v) { c.num_keys = std::stoi(v); }},
      {"max_steps", [](auto& c, const auto& v) { c.max_steps = std::stoi(v); }},
      {"num_item_types", [](auto& c, const auto& v) { c.num_item_types = std::stoi(v); }},
      {"total_items", [](auto& c, const auto& v) { c.total_items = std::stoi(v); }},
      {"group_size", [](auto& c, const auto& v) { c.group_size = std::stoi(v); }},
      {"layout_seed", [](auto& c, const auto& v) { c.layout_seed = std::stoull(v); }},
      {"penalty_divisor", [](auto& c, const auto& v) { c.penalty_divisor = std::stod(v); }},
      {"penalty_counts_groups",
       [](auto& c, const auto& v) { c.penalty_counts_groups = parse_bool(v); }},
      {"lr", [](auto& c, const auto& v) { c.lr = std::stod(v); }},
      {"gamma", [](auto& c, const auto& v) { c.gamma = std::stod(v); }},
      {"lambda", [](auto& c, const auto& v) { c.lambda_gae = std::stod(v); }},
      {"epsilon", [](auto& c, const auto& v) { c.epsilon = std::stod(v); }},
      {"bs", [](auto& c, const auto& v) { c.bs = std::stoi(v); }},
      {"l", [](auto& c, const auto& v) { c.history_l = std::stoi(v); }},
      {"include_goals",
       [](auto& c, const auto& v) { c.include_goals_in_history = parse_bool(v); }},
      {"rollout", [](auto& c, const auto& v) { c.rollout = std::stoi(v); }},
      {"epochs", [](auto& c, const auto& v) { c.epochs = std::stoi(v); }},
      {"ent_coef", [](auto& c, const auto& v) { c.ent_coef = std::stod(v); }},
      {"vf_coef", [](auto& c, const auto& v) { c.vf_coef = std::stod(v); }},
      {"grad_clip", [](auto& c, const auto& v) { c.grad_clip = std::stod(v); }},
      {"smdp_discount", [](auto& c, const auto& v) { c.smdp_discount = parse_bool(v); }},
      {"dim_z", [](auto& c, const auto& v) { c.dim_z = std::stoi(v); }},
      {"bs_abs", [](auto& c, const auto& v) { c.bs_abs = std::stoi(v); }},
      {"tf", [](auto& c, const auto& v) { c.tf = std::stoi(v); }},
      {"lambda_bisim", [](auto& c, const auto& v) { c.lambda_bisim = std::stod(v); }},
      {"buffer_capacity", [](auto& c, const auto& v) { c.buffer_capacity = std::stoi(v); }},
      {"augment", [](auto& c, const auto& v) { c.augment = parse_bool(v); }},
      {"lstm_hidden", [](auto& c, const auto& v) { c.lstm_hidden = std::stoi(v); }},
      {"policy_hidden", [](auto& c, const auto& v) { c.policy_hidden = std::stoi(v); }},
      {"encoder_hidden", [](auto& c, const auto& v) { c.encoder_hidden = std::stoi(v); }},
      {"head_hidden", [](auto& c, const auto& v) { c.head_hidden = std::stoi(v); }},
      {"seeds", [](auto& c, const auto& v) { c.seeds = parse_seed_list(v); }},
      {"budget", [](auto& c, const auto& v) { c.budget = std::stoll(v); }},
      {"eval_every", [](auto& c, const auto& v) { c.eval_every = std::stoi(v); }},
      {"eval_episodes", [](auto& c, const auto& v) { c.eval_episodes = std::stoi(v); }},
      {"checkpoint_every", [](auto& c, const auto& v) { c.checkpoint_every = std::stoi(v); }},
      {"out", [](auto& c, const auto& v) { c.out_dir = v; }},
      {"log_trajectories", [](auto& c, const auto& v) { c.log_trajectories = parse_bool(v); }},
  };

  auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError("unknown config key: " + key);
  try {
    it->second(*this, value);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError("bad value for key " + key + ": " + value);
  }
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // Trim.
    const size_t begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    const size_t end = line.find_last_not_of(" \t\r");
    line = line.substr(begin, end - begin + 1);
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(line_no) + " is not key=value: " + line);
    std::string key = line.substr(0, eq);
    std::string value = line.substr(eq + 1);
    while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.pop_back();
    while (!value.empty() && (value.front() == ' ' || value.front() == '\t')) value.erase(0, 1);
    cfg.apply_override(key, value);
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::stringstream buffer;
  buffer << is.rdbuf();
  return from_text(buffer.str());
}

ExperimentConfig ExperimentConfig::from_manifest(const std::string& path, uint64_t* seed_out) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open manifest: " + path);
  static const char* kRunKeys[] = {"run_seed",     "code_version",   "start_time",
                                   "training_log", "eval_log",       "episodes_log",
                                   "trajectory_log", "macro_log"};
  std::string line, config_text;
  while (std::getline(is, line)) {
    const size_t eq = line.find('=');
    const std::string key = eq == std::string::npos ? "" : line.substr(0, eq);
    bool run_key = false;
    for (const char* k : kRunKeys) run_key |= (key == k);
    if (run_key) {
      if (key == "run_seed" && seed_out) *seed_out = std::stoull(line.substr(eq + 1));
      continue;
    }
    config_text += line;
    config_text += '\n';
  }
  return from_text(config_text);
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  os.precision(17);
  os << "env=" << env << "\n";
  os << "mode=" << (mode == ObsMode::FullMap ? "mdp" : "pomdp") << "\n";
  os << "method=" << method_name(method) << "\n";
  os << "grid_size=" << grid_size << "\n";
  os << "window=" << window << "\n";
  os << "num_keys=" << num_keys << "\n";
  os << "max_steps=" << resolved_max_steps() << "\n";
  os << "num_item_types=" << num_item_types << "\n";
  os << "total_items=" << total_items << "\n";
  os << "group_size=" << group_size << "\n";
  os << "layout_seed=" << layout_seed << "\n";
  os << "penalty_divisor=" << penalty_divisor << "\n";
  os << "penalty_counts_groups=" << (penalty_counts_groups ? 1 : 0) << "\n";
  os << "lr=" << lr << "\n";
  os << "gamma=" << gamma << "\n";
  os << "lambda=" << lambda_gae << "\n";
  os << "epsilon=" << epsilon << "\n";
  os << "bs=" << bs << "\n";
  os << "l=" << history_l << "\n";
  os << "include_goals=" << (include_goals_in_history ? 1 : 0) << "\n";
  os << "rollout=" << rollout << "\n";
  os << "epochs=" << epochs << "\n";
  os << "ent_coef=" << ent_coef << "\n";
  os << "vf_coef=" << vf_coef << "\n";
  os << "grad_clip=" << grad_clip << "\n";
  os << "smdp_discount=" << (smdp_discount ? 1 : 0) << "\n";
  os << "dim_z=" << resolved_dim_z() << "\n";
  os << "bs_abs=" << bs_abs << "\n";
  os << "tf=" << tf << "\n";
  os << "lambda_bisim=" << lambda_bisim << "\n";
  os << "buffer_capacity=" << buffer_capacity << "\n";
  os << "augment=" << (augment ? 1 : 0) << "\n";
  os << "lstm_hidden=" << lstm_hidden << "\n";
  os << "policy_hidden=" << policy_hidden << "\n";
  os << "encoder_hidden=" << encoder_hidden << "\n";
  os << "head_hidden=" << head_hidden << "\n";
  os << "seeds=" << seeds_to_string(seeds) << "\n";
  os << "budget=" << budget << "\n";
  os << "eval_every=" << eval_every << "\n";
  os << "eval_episodes=" << eval_episodes << "\n";
  os << "checkpoint_every=" << checkpoint_every << "\n";
  os << "out=" << out_dir << "\n";
  os << "log_trajectories=" << (log_trajectories ? 1 : 0) << "\n";
  return os.str();
}

std::vector<std::string> ExperimentConfig::preset_names() { return {"doorkey8", "multiitem8"}; }

ExperimentConfig ExperimentConfig::preset(const std::string& name) {
  ExperimentConfig cfg;
  if (name == "doorkey8") {
    // Desk-scale DoorKey: one key, small horizon, CI-friendly budget.
    cfg.env = "doorkey";
    cfg.mode = ObsMode::Egocentric;
    cfg.grid_size = 8;
    cfg.num_keys = 1;
    cfg.window = 5;
    cfg.max_steps = 256;
    cfg.budget = 200000;
    cfg.seeds = {1, 2, 3};
    cfg.method = Method::DcHRL;
    return cfg;
  }
  if (name == "multiitem8") {
    // Desk-scale collection grid: 6 item types, 24 items, fixed item layout.
    cfg.env = "multiitem";
    cfg.mode = ObsMode::FullMap;
    cfg.grid_size = 8;
    cfg.num_item_types = 6;
    cfg.total_items = 24;
    cfg.group_size = 4;
    cfg.max_steps = 288;
    cfg.layout_seed = 101;
    cfg.budget = 150000;
    cfg.seeds = {1, 2, 3};
    cfg.method = Method::DcHRL;
    return cfg;
  }
  throw ConfigError("unknown preset: " + name);
}

}  // namespace dchrl
