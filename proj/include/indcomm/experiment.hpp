#pragma once

// Experiment configuration, multi-seed runs, metrics files and plots.
//
// Config files are flat `key = value` lines; `#` starts a comment. Every key
// has a default, so an empty file is a valid config.
//
// A run directory holds:
//   config.cfg              resolved configuration
//   seed_<s>.csv            seed,episode,mean_return,td_loss,epsilon,wallclock_s
//   aggregate.csv           per-episode mean/min/max over seeds
//   checkpoints/seed_<s>_bundle_<b>.params

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "indcomm/envs.hpp"
#include "indcomm/trainer.hpp"

namespace indcomm::experiment {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string name;  // run label; derived from env and mode when empty
  std::string env = "predator_prey";
  envs::EnvOverrides env_overrides;

  train::Mode mode;
  std::size_t hidden_dim = 64;
  std::size_t msg_dim = 64;
  std::size_t comm_hidden = 64;
  std::string comm_input = "obs";
  bool own_message = true;
  bool detach = true;
  bool ps_own_message = false;

  double lr = 5e-4;
  double gamma = 0.99;
  double rms_rho = 0.99;
  double rms_eps = 1e-5;
  double grad_clip = 0.0;
  std::size_t buffer_capacity = 5000;
  std::size_t batch_size = 32;
  std::size_t target_interval = 200;
  std::size_t train_every = 1;
  train::EpsilonSchedule epsilon;

  std::size_t episodes = 50000;
  std::size_t eval_interval = 200;
  std::size_t eval_episodes = 32;
  std::size_t final_window = 2000;  // episodes averaged for the final score
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::string out_dir = "runs";

  /// Throws ConfigError on inconsistent values.
  void validate() const;
  /// Sets one key from its textual value. Throws ConfigError on unknown keys
  /// or values that do not parse.
  void set(const std::string& key, const std::string& value);
  /// Every key, one per line, in a form parse_config reads back identically.
  std::string to_text() const;

  std::string label() const;
  train::TrainerConfig trainer_config() const;
};

ExperimentConfig parse_config(std::istream& is, const std::string& source = "<config>");
ExperimentConfig parse_config_file(const std::filesystem::path& path);

/// `out_dir` joined under $INDCOMM_OUT_ROOT when that is set and out_dir is
/// relative.
std::filesystem::path resolve_out_dir(const std::string& out_dir);

struct MetricsRow {
  std::uint64_t seed = 0;
  std::size_t episode = 0;
  double mean_return = 0.0;
  double td_loss = 0.0;  // mean since the previous row; NaN before training starts
  double epsilon = 0.0;
  double wallclock_s = 0.0;
};

inline constexpr const char* kMetricsHeader = "seed,episode,mean_return,td_loss,epsilon,wallclock_s";

std::string format_row(const MetricsRow& row);
MetricsRow parse_row(const std::string& line);
/// Reads a metrics file; tolerates a truncated final line.
std::vector<MetricsRow> read_metrics(const std::filesystem::path& path);

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<MetricsRow> rows;
  double final_mean = 0.0;
  std::optional<std::size_t> threshold_episode;
  std::vector<train::TrainStats> stats;  // only when recorded
};

struct RunResult {
  std::filesystem::path dir;
  std::string label;
  std::vector<SeedResult> seeds;
};

struct RunOptions {
  bool write_files = true;
  bool record_stats = false;  // keep every TrainStats (memory heavy)
  bool verbose = false;       // progress lines on stderr
};

/// Trains one seed. Deterministic in (config, seed) except for wallclock_s.
SeedResult run_seed(const ExperimentConfig& config, std::uint64_t seed, const RunOptions& options,
                    const std::filesystem::path& dir);

/// Trains every seed (in parallel when OpenMP has threads) and writes the
/// aggregate once all seeds are done.
RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

/// Mean of mean_return over rows with episode > last - window.
double final_window_mean(const std::vector<MetricsRow>& rows, std::size_t window);

/// First episode at which the mean return over the trailing `evals`
/// evaluations exceeds `threshold`.
std::optional<std::size_t> threshold_episode(const std::vector<MetricsRow>& rows, double threshold = 0.0,
                                             std::size_t evals = 5);

struct AggregateRow {
  std::size_t episode = 0;
  double mean = 0.0;
  double min = 0.0;
  double max = 0.0;
  std::size_t n = 0;
};

/// Per-episode statistics over seeds; only episodes present in every seed.
std::vector<AggregateRow> aggregate(const std::vector<std::vector<MetricsRow>>& per_seed);

struct PlotSummary {
  std::string label;
  std::size_t n_seeds = 0;
  double final_mean = 0.0;
  double final_min = 0.0;
  double final_max = 0.0;
  std::optional<double> mean_threshold_episode;  // over seeds that crossed
  std::size_t seeds_crossed = 0;
};

/// Reads run directories, writes `returns.svg` and `summary.csv` into
/// `out_dir` and returns the summary rows.
std::vector<PlotSummary> emit_plots(const std::vector<std::filesystem::path>& run_dirs,
                                    const std::filesystem::path& out_dir);

}  // namespace indcomm::experiment
