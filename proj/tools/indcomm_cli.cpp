// indcomm: train, plot and inspect gradient flow.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "indcomm/envs.hpp"
#include "indcomm/experiment.hpp"
#include "indcomm/trainer.hpp"

namespace fs = std::filesystem;
using namespace indcomm;

int main(int argc, char** argv) {
  CLI::App app{"Independent deep Q-learning with learned communication"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train one configuration over several seeds");
  std::string config_path, mode, seeds, out;
  bool comm = false, no_own = false, no_detach = false, quiet = false;
  std::size_t hidden = 0, episodes = 0;
  train_cmd->add_option("--config", config_path, "config file")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--mode", mode, "parameter sharing")->check(CLI::IsMember({"ps", "nps"}));
  train_cmd->add_flag("--comm", comm, "enable learned communication");
  train_cmd->add_option("--hidden", hidden, "recurrent hidden width");
  train_cmd->add_option("--seeds", seeds, "comma-separated seeds");
  train_cmd->add_option("--episodes", episodes, "training episodes per seed");
  train_cmd->add_option("--out", out, "output directory");
  train_cmd->add_flag("--no-own-message", no_own, "do not feed an agent's own message back");
  train_cmd->add_flag("--no-detach", no_detach, "keep incoming messages attached");
  train_cmd->add_flag("--quiet", quiet, "no progress output");

  // plot
  auto* plot_cmd = app.add_subcommand("plot", "plot return curves of finished runs");
  std::vector<std::string> run_dirs;
  std::string plot_out;
  plot_cmd->add_option("--runs", run_dirs, "run directories")->required();
  plot_cmd->add_option("--out", plot_out, "where to write returns.svg and summary.csv (default: parent of the first run)");

  // gradreport
  auto* grad_cmd = app.add_subcommand("gradreport", "per-loss gradient norms under three message wirings");
  std::string grad_mode = "nps", grad_env = "pp_small";
  bool grad_comm = false;
  std::size_t grad_batches = 100, grad_seed = 1;
  grad_cmd->add_option("--mode", grad_mode, "parameter sharing")->check(CLI::IsMember({"ps", "nps"}));
  grad_cmd->add_flag("--comm", grad_comm, "communication (required)");
  grad_cmd->add_option("--env", grad_env, "environment name");
  grad_cmd->add_option("--batches", grad_batches, "random batches to inspect");
  grad_cmd->add_option("--seed", grad_seed, "seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) {
      auto cfg = experiment::parse_config_file(config_path);
      if (!mode.empty()) cfg.set("mode", mode);
      if (comm) cfg.mode.communication = true;
      if (hidden) cfg.set("hidden_dim", std::to_string(hidden));
      if (!seeds.empty()) cfg.set("seeds", seeds);
      if (episodes) cfg.set("episodes", std::to_string(episodes));
      if (!out.empty()) cfg.set("out_dir", out);
      if (no_own) cfg.own_message = false;
      if (no_detach) cfg.detach = false;
      cfg.validate();
      experiment::RunOptions opts;
      opts.verbose = !quiet;
      const auto run = experiment::run_experiment(cfg, opts);
      std::printf("%s -> %s\n", run.label.c_str(), run.dir.string().c_str());
      for (const auto& s : run.seeds) {
        std::printf("  seed %llu: final-window mean return %.4f", static_cast<unsigned long long>(s.seed), s.final_mean);
        if (s.threshold_episode) std::printf(", positive from episode %zu", *s.threshold_episode);
        std::printf("\n");
      }
    } else if (*plot_cmd) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      const fs::path dest = plot_out.empty() ? fs::absolute(dirs.front()).parent_path() : fs::path(plot_out);
      const auto summary = experiment::emit_plots(dirs, dest);
      for (const auto& s : summary) {
        std::printf("%-40s seeds %zu  final mean %.4f [%.4f, %.4f]", s.label.c_str(), s.n_seeds, s.final_mean,
                    s.final_min, s.final_max);
        if (s.mean_threshold_episode) std::printf("  positive at %.0f (%zu seeds)", *s.mean_threshold_episode, s.seeds_crossed);
        std::printf("\n");
      }
      std::printf("wrote %s and %s\n", (dest / "returns.svg").string().c_str(), (dest / "summary.csv").string().c_str());
    } else if (*grad_cmd) {
      if (!grad_comm) throw experiment::ConfigError("gradreport needs --comm");
      if (grad_mode != "nps") throw experiment::ConfigError("gradreport inspects independent parameters: use --mode nps");
      if (!envs::is_known_env(grad_env)) throw experiment::ConfigError("unknown environment '" + grad_env + "'");
      const auto env = envs::make_env(grad_env, {}, grad_seed);
      train::TrainerConfig cfg;
      cfg.mode = {false, true};
      Rng rng(grad_seed);
      const auto report = train::verify_gradient_flow(cfg, env->spec(), grad_batches, rng);
      std::cout << report.to_text();
      return report.ok() ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
