// dchrl: experiment harness for the decoupled hierarchical RL workbench.
//
// Subcommands: train, eval, verify, export-curves, z-dump.
// Exit codes: 0 ok, 1 property/criterion failure, 2 usage error.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "dchrl/config.hpp"
#include "dchrl/trainer.hpp"
#include "dchrl/verify.hpp"

namespace {

dchrl::ExperimentConfig resolve_config(const std::string& config_path, const std::string& preset,
                                       const std::vector<std::string>& overrides) {
  dchrl::ExperimentConfig cfg;
  if (!preset.empty()) {
    cfg = dchrl::ExperimentConfig::preset(preset);
  }
  if (!config_path.empty()) {
    cfg = dchrl::ExperimentConfig::from_file(config_path);
  }
  for (const std::string& kv : overrides) {
    const size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw dchrl::ConfigError("--set expects key=value, got: " + kv);
    cfg.apply_override(kv.substr(0, eq), kv.substr(eq + 1));
  }
  // Optional output root prefix for relative output directories.
  if (const char* root = std::getenv("DCHRL_OUT_ROOT");
      root && *root && !cfg.out_dir.empty() && cfg.out_dir.front() != '/') {
    cfg.out_dir = std::string(root) + "/" + cfg.out_dir;
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Decoupled hierarchical RL with state abstraction: training and verification"};
  app.require_subcommand(1);

  std::string config_path, preset, resume, ckpt_path, out_path("curves.csv");
  std::vector<std::string> overrides, run_dirs;
  int episodes = 10;
  int smooth = 0;
  uint64_t seed = 7;
  bool use_steps = false;

  CLI::App* train = app.add_subcommand("train", "Train the configured method over all seeds");
  train->add_option("--config", config_path, "Flat key=value config file");
  train->add_option("--preset", preset, "Built-in preset (doorkey8, multiitem8)");
  train->add_option("--set", overrides, "Override any config key, key=value")->take_all();
  train->add_option("--resume", resume, "Checkpoint to resume from (single-seed runs)");

  CLI::App* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval->add_option("--config", config_path, "Flat key=value config file");
  eval->add_option("--preset", preset, "Built-in preset");
  eval->add_option("--set", overrides, "Override any config key")->take_all();
  eval->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  eval->add_option("--episodes", episodes, "Number of evaluation episodes");
  eval->add_option("--seed", seed, "Evaluation seed");

  CLI::App* verify = app.add_subcommand("verify", "Run the oracle property suite");
  verify->add_option("--seed", seed, "Suite seed");

  CLI::App* exportc = app.add_subcommand("export-curves", "Merge run logs into plot-ready CSV");
  exportc->add_option("runs", run_dirs, "Run directories (out/seed_N)")->required();
  exportc->add_option("--out", out_path, "Output CSV path");
  exportc->add_flag("--steps", use_steps, "Export steps-to-completion instead of score");
  exportc->add_option("--smooth", smooth, "Trailing smoothing window");

  CLI::App* zdump = app.add_subcommand("z-dump", "Dump latent states of greedy play as CSV");
  zdump->add_option("--config", config_path, "Flat key=value config file");
  zdump->add_option("--preset", preset, "Built-in preset");
  zdump->add_option("--set", overrides, "Override any config key")->take_all();
  zdump->add_option("--ckpt", ckpt_path, "Checkpoint file")->required();
  zdump->add_option("--episodes", episodes, "Episodes to dump");
  zdump->add_option("--seed", seed, "Episode seed");
  zdump->add_option("--out", out_path, "Output CSV path (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_name() == "CallForHelp" ? 0 : 2;
  }

  try {
    if (train->parsed()) {
      dchrl::ExperimentConfig cfg = resolve_config(config_path, preset, overrides);
      if (!resume.empty()) {
        if (cfg.seeds.size() != 1)
          throw dchrl::ConfigError("--resume requires a single seed");
        const std::string run_dir = cfg.out_dir + "/seed_" + std::to_string(cfg.seeds[0]);
        dchrl::TrainResult r = dchrl::train_single(cfg, cfg.seeds[0], run_dir, resume);
        std::cout << "resumed run: converged_score=" << r.converged_score
                  << " env_steps=" << r.env_steps << "\n";
        return 0;
      }
      dchrl::MultiResult multi = dchrl::train_all_seeds(cfg);
      std::cout << "converged score over " << multi.runs.size()
                << " seeds: " << multi.score_mean << " +/- " << multi.score_std << "\n";
      std::cout << "summary: " << cfg.out_dir << "/summary.txt\n";
      return 0;
    }

    if (eval->parsed()) {
      dchrl::ExperimentConfig cfg = resolve_config(config_path, preset, overrides);
      dchrl::Agent agent = dchrl::make_agent(cfg, seed);
      std::map<std::string, std::string> meta;
      dchrl::nn::ParamStore loaded = dchrl::nn::load_checkpoint(ckpt_path, &meta);
      dchrl::check_fingerprint(agent, meta);
      agent.store = std::move(loaded);
      const dchrl::EvalSummary s = dchrl::evaluate(agent, seed, episodes);
      std::cout << "episodes=" << s.episodes << " score_mean=" << s.score_mean
                << " score_std=" << s.score_std << " steps_mean=" << s.steps_mean << "\n";
      return 0;
    }

    if (verify->parsed()) {
      dchrl::VerifyOptions options;
      options.seed = seed;
      const int failures = dchrl::run_verify_suite(std::cout, options);
      if (failures > 0) {
        std::cout << failures << " properties failed\n";
        return 1;
      }
      std::cout << "all properties passed\n";
      return 0;
    }

    if (exportc->parsed()) {
      dchrl::CurveExportOptions options;
      options.run_dirs = run_dirs;
      options.out_path = out_path;
      options.use_steps = use_steps;
      options.smooth = smooth;
      dchrl::export_curves(options);
      std::cout << "wrote " << out_path << "\n";
      return 0;
    }

    if (zdump->parsed()) {
      dchrl::ExperimentConfig cfg = resolve_config(config_path, preset, overrides);
      dchrl::Agent agent = dchrl::make_agent(cfg, seed);
      std::map<std::string, std::string> meta;
      dchrl::nn::ParamStore loaded = dchrl::nn::load_checkpoint(ckpt_path, &meta);
      dchrl::check_fingerprint(agent, meta);
      agent.store = std::move(loaded);
      if (out_path == "curves.csv" || out_path.empty()) {
        dchrl::z_dump(agent, seed, episodes, std::cout);
      } else {
        std::ofstream os(out_path);
        dchrl::z_dump(agent, seed, episodes, os);
        std::cout << "wrote " << out_path << "\n";
      }
      return 0;
    }
  } catch (const dchrl::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
