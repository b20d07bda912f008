#include "indcomm/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

#include "indcomm/nn.hpp"
#include "indcomm/replay.hpp"

namespace indcomm::experiment {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  auto [p, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || p != end || v.empty() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
  if (v == "false" || v == "no" || v == "off" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

std::vector<std::uint64_t> parse_seeds(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    out.push_back(parse_size(key, item));
  }
  if (out.empty()) throw ConfigError(key + ": expected a comma-separated list of seeds");
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const char* yes_no(bool b) { return b ? "true" : "false"; }

}  // namespace

void ExperimentConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  if (key == "name") name = v;
  else if (key == "env") env = v;
  else if (key == "grid") env_overrides.grid = parse_size(key, v);
  else if (key == "n_agents") env_overrides.n_agents = parse_size(key, v);
  else if (key == "n_prey") env_overrides.n_prey = parse_size(key, v);
  else if (key == "max_steps") env_overrides.max_steps = parse_size(key, v);
  else if (key == "view") env_overrides.view = parse_size(key, v);
  else if (key == "mode") {
    if (v == "ps") mode.param_sharing = true;
    else if (v == "nps") mode.param_sharing = false;
    else throw ConfigError("mode: expected ps or nps, got '" + v + "'");
  }
  else if (key == "comm") mode.communication = parse_bool(key, v);
  else if (key == "hidden_dim") hidden_dim = parse_size(key, v);
  else if (key == "msg_dim") msg_dim = parse_size(key, v);
  else if (key == "comm_hidden") comm_hidden = parse_size(key, v);
  else if (key == "comm_input") {
    // Both spellings mean the encoder reads the current observation only.
    if (v != "obs" && v != "history-free") throw ConfigError("comm_input: expected obs or history-free, got '" + v + "'");
    comm_input = "obs";
  }
  else if (key == "own_message") own_message = parse_bool(key, v);
  else if (key == "detach") detach = parse_bool(key, v);
  else if (key == "ps_own_message") ps_own_message = parse_bool(key, v);
  else if (key == "lr") lr = parse_double(key, v);
  else if (key == "gamma") gamma = parse_double(key, v);
  else if (key == "rms_rho") rms_rho = parse_double(key, v);
  else if (key == "rms_eps") rms_eps = parse_double(key, v);
  else if (key == "grad_clip") grad_clip = parse_double(key, v);
  else if (key == "buffer_capacity") buffer_capacity = parse_size(key, v);
  else if (key == "batch_size") batch_size = parse_size(key, v);
  else if (key == "target_interval") target_interval = parse_size(key, v);
  else if (key == "train_every") train_every = parse_size(key, v);
  else if (key == "eps_start") epsilon.start = parse_double(key, v);
  else if (key == "eps_end") epsilon.end = parse_double(key, v);
  else if (key == "eps_horizon") epsilon.horizon = parse_size(key, v);
  else if (key == "episodes") episodes = parse_size(key, v);
  else if (key == "eval_interval") eval_interval = parse_size(key, v);
  else if (key == "eval_episodes") eval_episodes = parse_size(key, v);
  else if (key == "final_window") final_window = parse_size(key, v);
  else if (key == "seeds") seeds = parse_seeds(key, v);
  else if (key == "out_dir") out_dir = v;
  else throw ConfigError("unknown key '" + key + "'");
}

void ExperimentConfig::validate() const {
  auto positive = [](const char* key, double v) {
    if (!(v > 0)) throw ConfigError(std::string(key) + " must be positive");
  };
  if (!envs::is_known_env(env)) throw ConfigError("env: unknown environment '" + env + "'");
  positive("hidden_dim", static_cast<double>(hidden_dim));
  positive("msg_dim", static_cast<double>(msg_dim));
  positive("comm_hidden", static_cast<double>(comm_hidden));
  positive("lr", lr);
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma must be in [0, 1), got " + fmt(gamma));
  if (!(rms_rho >= 0.0 && rms_rho < 1.0)) throw ConfigError("rms_rho must be in [0, 1)");
  positive("rms_eps", rms_eps);
  if (grad_clip < 0.0) throw ConfigError("grad_clip must be non-negative (0 disables clipping)");
  positive("buffer_capacity", static_cast<double>(buffer_capacity));
  positive("batch_size", static_cast<double>(batch_size));
  if (batch_size > buffer_capacity) throw ConfigError("batch_size cannot exceed buffer_capacity");
  positive("target_interval", static_cast<double>(target_interval));
  positive("train_every", static_cast<double>(train_every));
  for (double e : {epsilon.start, epsilon.end}) {
    if (!(e >= 0.0 && e <= 1.0)) throw ConfigError("eps_start and eps_end must be in [0, 1]");
  }
  positive("episodes", static_cast<double>(episodes));
  positive("eval_interval", static_cast<double>(eval_interval));
  positive("eval_episodes", static_cast<double>(eval_episodes));
  positive("final_window", static_cast<double>(final_window));
  if (seeds.empty()) throw ConfigError("seeds: at least one seed required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds: duplicates");
  }
  if (out_dir.empty()) throw ConfigError("out_dir must not be empty");
  for (const auto& o : {env_overrides.grid, env_overrides.n_agents, env_overrides.max_steps, env_overrides.view}) {
    if (o && *o == 0) throw ConfigError("environment overrides must be positive");
  }
  try {
    (void)envs::make_env(env, env_overrides, 0);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("environment: ") + e.what());
  }
}

std::string ExperimentConfig::to_text() const {
  std::ostringstream os;
  os << "name = " << name << '\n';
  os << "env = " << env << '\n';
  if (env_overrides.grid) os << "grid = " << *env_overrides.grid << '\n';
  if (env_overrides.n_agents) os << "n_agents = " << *env_overrides.n_agents << '\n';
  if (env_overrides.n_prey) os << "n_prey = " << *env_overrides.n_prey << '\n';
  if (env_overrides.max_steps) os << "max_steps = " << *env_overrides.max_steps << '\n';
  if (env_overrides.view) os << "view = " << *env_overrides.view << '\n';
  os << "mode = " << (mode.param_sharing ? "ps" : "nps") << '\n';
  os << "comm = " << yes_no(mode.communication) << '\n';
  os << "hidden_dim = " << hidden_dim << '\n';
  os << "msg_dim = " << msg_dim << '\n';
  os << "comm_hidden = " << comm_hidden << '\n';
  os << "comm_input = " << comm_input << '\n';
  os << "own_message = " << yes_no(own_message) << '\n';
  os << "detach = " << yes_no(detach) << '\n';
  os << "ps_own_message = " << yes_no(ps_own_message) << '\n';
  os << "lr = " << fmt(lr) << '\n';
  os << "gamma = " << fmt(gamma) << '\n';
  os << "rms_rho = " << fmt(rms_rho) << '\n';
  os << "rms_eps = " << fmt(rms_eps) << '\n';
  os << "grad_clip = " << fmt(grad_clip) << '\n';
  os << "buffer_capacity = " << buffer_capacity << '\n';
  os << "batch_size = " << batch_size << '\n';
  os << "target_interval = " << target_interval << '\n';
  os << "train_every = " << train_every << '\n';
  os << "eps_start = " << fmt(epsilon.start) << '\n';
  os << "eps_end = " << fmt(epsilon.end) << '\n';
  os << "eps_horizon = " << epsilon.horizon << '\n';
  os << "episodes = " << episodes << '\n';
  os << "eval_interval = " << eval_interval << '\n';
  os << "eval_episodes = " << eval_episodes << '\n';
  os << "final_window = " << final_window << '\n';
  os << "seeds = ";
  for (std::size_t i = 0; i < seeds.size(); ++i) os << (i ? "," : "") << seeds[i];
  os << '\n';
  os << "out_dir = " << out_dir << '\n';
  return os.str();
}

std::string ExperimentConfig::label() const {
  if (!name.empty()) return name;
  std::string s = env + "_" + mode.label() + "_h" + std::to_string(hidden_dim);
  if (mode.communication && !mode.param_sharing) {
    if (!own_message) s += "_noown";
    if (!detach) s += "_nodetach";
  }
  if (mode.communication && mode.param_sharing && ps_own_message) s += "_own";
  return s;
}

train::TrainerConfig ExperimentConfig::trainer_config() const {
  train::TrainerConfig t;
  t.mode = mode;
  t.hidden = hidden_dim;
  t.msg_dim = msg_dim;
  t.comm_hidden = comm_hidden;
  t.gamma = gamma;
  t.optim = {lr, rms_rho, rms_eps};
  t.grad_clip = grad_clip;
  t.target_interval = target_interval;
  t.own_message = own_message;
  t.detach = detach;
  t.ps_own_message = ps_own_message;
  return t;
}

ExperimentConfig parse_config(std::istream& is, const std::string& source) {
  ExperimentConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse_config_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse_config(in, path.string());
}

fs::path resolve_out_dir(const std::string& out_dir) {
  fs::path p(out_dir);
  if (p.is_relative()) {
    if (const char* root = std::getenv("INDCOMM_OUT_ROOT"); root && *root) return fs::path(root) / p;
  }
  return p;
}

// ---------------------------------------------------------------------------

std::string format_row(const MetricsRow& r) {
  return std::to_string(r.seed) + "," + std::to_string(r.episode) + "," + fmt(r.mean_return) + "," + fmt(r.td_loss) +
         "," + fmt(r.epsilon) + "," + fmt(r.wallclock_s);
}

MetricsRow parse_row(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) f.push_back(item);
  if (f.size() != 6) throw std::runtime_error("metrics row: expected 6 fields in '" + line + "'");
  auto num = [&](const std::string& s) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') throw std::runtime_error("metrics row: bad number '" + s + "'");
    return v;
  };
  MetricsRow r;
  r.seed = std::stoull(f[0]);
  r.episode = std::stoull(f[1]);
  r.mean_return = num(f[2]);
  r.td_loss = num(f[3]);
  r.epsilon = num(f[4]);
  r.wallclock_s = num(f[5]);
  return r;
}

std::vector<MetricsRow> read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open metrics file '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line) || trim(line) != kMetricsHeader) {
    throw std::runtime_error(path.string() + ": missing metrics header");
  }
  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    const bool last = in.peek() == std::char_traits<char>::eof();
    try {
      rows.push_back(parse_row(trim(line)));
    } catch (const std::exception&) {
      if (last) break;  // a row cut short by an interrupted run
      throw;
    }
  }
  return rows;
}

double final_window_mean(const std::vector<MetricsRow>& rows, std::size_t window) {
  if (rows.empty()) throw std::invalid_argument("final window: no rows");
  const std::size_t last = rows.back().episode;
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (r.episode + window > last) {
      s += r.mean_return;
      ++n;
    }
  }
  return s / static_cast<double>(n);
}

std::optional<std::size_t> threshold_episode(const std::vector<MetricsRow>& rows, double threshold,
                                             std::size_t evals) {
  if (evals == 0) throw std::invalid_argument("threshold: evals must be positive");
  double s = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    s += rows[k].mean_return;
    if (k >= evals) s -= rows[k - evals].mean_return;
    if (k + 1 >= evals && s / static_cast<double>(evals) > threshold) return rows[k].episode;
  }
  return std::nullopt;
}

std::vector<AggregateRow> aggregate(const std::vector<std::vector<MetricsRow>>& per_seed) {
  std::map<std::size_t, std::vector<double>> by_episode;
  for (const auto& rows : per_seed) {
    for (const auto& r : rows) by_episode[r.episode].push_back(r.mean_return);
  }
  std::vector<AggregateRow> out;
  for (const auto& [ep, vals] : by_episode) {
    if (vals.size() != per_seed.size()) continue;
    AggregateRow a;
    a.episode = ep;
    a.n = vals.size();
    a.min = *std::min_element(vals.begin(), vals.end());
    a.max = *std::max_element(vals.begin(), vals.end());
    double s = 0.0;
    for (double v : vals) s += v;
    a.mean = s / static_cast<double>(vals.size());
    out.push_back(a);
  }
  return out;
}

// ---------------------------------------------------------------------------

SeedResult run_seed(const ExperimentConfig& config, std::uint64_t seed, const RunOptions& options, const fs::path& dir) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();

  auto env = envs::make_env(config.env, config.env_overrides, Rng(seed, 3).next());
  auto eval_env = envs::make_env(config.env, config.env_overrides, Rng(seed, 4).next());
  Rng init(seed, 0), act_rng(seed, 1), sample_rng(seed, 2), eval_rng(seed, 5);
  train::Trainer trainer(config.trainer_config(), env->spec(), init);
  replay::ReplayBuffer buffer(config.buffer_capacity);

  std::ofstream csv;
  if (options.write_files) {
    const fs::path path = dir / ("seed_" + std::to_string(seed) + ".csv");
    csv.open(path, std::ios::trunc);
    if (!csv) throw std::runtime_error("cannot write '" + path.string() + "'");
    csv << kMetricsHeader << '\n' << std::flush;
  }

  SeedResult result;
  result.seed = seed;
  double loss_sum = 0.0;
  std::size_t loss_n = 0;

  auto emit = [&](std::size_t episode) {
    double ret = 0.0;
    for (std::size_t k = 0; k < config.eval_episodes; ++k) ret += trainer.run_episode(*eval_env, nullptr, 0.0, eval_rng);
    MetricsRow row;
    row.seed = seed;
    row.episode = episode;
    row.mean_return = ret / static_cast<double>(config.eval_episodes);
    row.td_loss = loss_n ? loss_sum / static_cast<double>(loss_n) : std::numeric_limits<double>::quiet_NaN();
    row.epsilon = train::epsilon_at(config.epsilon, episode);
    row.wallclock_s = std::chrono::duration<double>(clock::now() - start).count();
    loss_sum = 0.0;
    loss_n = 0;
    result.rows.push_back(row);
    if (options.write_files) {
      csv << format_row(row) << '\n' << std::flush;
      if (!csv) throw std::runtime_error("failed writing metrics for seed " + std::to_string(seed));
    }
    if (options.verbose) {
      std::fprintf(stderr, "[%s seed %llu] episode %zu return %.3f eps %.3f %.0fs\n", config.label().c_str(),
                   static_cast<unsigned long long>(seed), episode, row.mean_return, row.epsilon, row.wallclock_s);
    }
  };

  emit(0);
  for (std::size_t e = 0; e < config.episodes; ++e) {
    trainer.run_episode(*env, &buffer, train::epsilon_at(config.epsilon, e), act_rng);
    const std::size_t done = e + 1;
    if (done % config.train_every == 0 && buffer.can_sample(config.batch_size)) {
      auto stats = trainer.train_batch(buffer.sample(config.batch_size, sample_rng));
      loss_sum += stats.mean_loss();
      ++loss_n;
      if (options.record_stats) result.stats.push_back(std::move(stats));
    }
    trainer.maybe_sync_targets(done);
    if (done % config.eval_interval == 0 || done == config.episodes) emit(done);
  }

  if (options.write_files) {
    const fs::path ckdir = dir / "checkpoints";
    fs::create_directories(ckdir);
    for (std::size_t b = 0; b < trainer.num_bundles(); ++b) {
      nn::save_parameters((ckdir / ("seed_" + std::to_string(seed) + "_bundle_" + std::to_string(b) + ".params")).string(),
                          trainer.bundle(b).live_params());
    }
  }
  result.final_mean = final_window_mean(result.rows, config.final_window);
  result.threshold_episode = threshold_episode(result.rows);
  return result;
}

RunResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  RunResult run;
  run.label = config.label();
  run.dir = resolve_out_dir(config.out_dir) / run.label;
  if (options.write_files) {
    fs::create_directories(run.dir);
    std::ofstream snap(run.dir / "config.cfg", std::ios::trunc);
    snap << config.to_text();
    if (!snap) throw std::runtime_error("cannot write config snapshot in '" + run.dir.string() + "'");
  }

  const int n = static_cast<int>(config.seeds.size());
  run.seeds.resize(config.seeds.size());
  std::vector<std::exception_ptr> errors(config.seeds.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < n; ++k) {
    try {
      run.seeds[k] = run_seed(config, config.seeds[k], options, run.dir);
    } catch (...) {
      errors[k] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  if (options.write_files) {
    std::vector<std::vector<MetricsRow>> per_seed;
    for (const auto& s : run.seeds) per_seed.push_back(s.rows);
    std::ofstream agg(run.dir / "aggregate.csv", std::ios::trunc);
    agg << "episode,mean_return,min_return,max_return,n_seeds\n";
    for (const auto& a : aggregate(per_seed)) {
      agg << a.episode << ',' << fmt(a.mean) << ',' << fmt(a.min) << ',' << fmt(a.max) << ',' << a.n << '\n';
    }
    if (!agg) throw std::runtime_error("cannot write aggregate in '" + run.dir.string() + "'");
  }
  return run;
}

// ---------------------------------------------------------------------------

namespace {

struct LoadedRun {
  std::string label;
  std::vector<std::vector<MetricsRow>> per_seed;
  std::vector<AggregateRow> agg;
  PlotSummary summary;
};

LoadedRun load_run(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("'" + dir.string() + "' is not a run directory");
  LoadedRun run;
  std::size_t window = ExperimentConfig{}.final_window;
  run.label = dir.filename().string();
  if (fs::exists(dir / "config.cfg")) {
    const auto cfg = parse_config_file(dir / "config.cfg");
    run.label = cfg.label();
    window = cfg.final_window;
  }
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("seed_", 0) == 0 && entry.path().extension() == ".csv") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    auto rows = read_metrics(f);
    if (!rows.empty()) run.per_seed.push_back(std::move(rows));
  }
  if (run.per_seed.empty()) throw std::runtime_error("'" + dir.string() + "' has no metrics");
  run.agg = aggregate(run.per_seed);

  auto& s = run.summary;
  s.label = run.label;
  s.n_seeds = run.per_seed.size();
  std::vector<double> finals;
  double thr_sum = 0.0;
  for (const auto& rows : run.per_seed) {
    finals.push_back(final_window_mean(rows, window));
    if (auto t = threshold_episode(rows)) {
      thr_sum += static_cast<double>(*t);
      ++s.seeds_crossed;
    }
  }
  double sum = 0.0;
  for (double v : finals) sum += v;
  s.final_mean = sum / static_cast<double>(finals.size());
  s.final_min = *std::min_element(finals.begin(), finals.end());
  s.final_max = *std::max_element(finals.begin(), finals.end());
  if (s.seeds_crossed) s.mean_threshold_episode = thr_sum / static_cast<double>(s.seeds_crossed);
  return run;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

void write_svg(const fs::path& path, const std::vector<LoadedRun>& runs) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  const double W = 860, H = 520, left = 70, right = 220, top = 40, bottom = 60;
  const double pw = W - left - right, ph = H - top - bottom;

  double xmax = 1, ymin = std::numeric_limits<double>::infinity(), ymax = -ymin;
  for (const auto& r : runs) {
    for (const auto& a : r.agg) {
      xmax = std::max(xmax, static_cast<double>(a.episode));
      ymin = std::min(ymin, a.min);
      ymax = std::max(ymax, a.max);
    }
  }
  if (!std::isfinite(ymin)) ymin = ymax = 0;
  if (ymax - ymin < 1e-9) {
    ymin -= 1;
    ymax += 1;
  }
  const double pad = 0.05 * (ymax - ymin);
  ymin -= pad;
  ymax += pad;
  auto X = [&](double e) { return left + pw * e / xmax; };
  auto Y = [&](double v) { return top + ph * (1.0 - (v - ymin) / (ymax - ymin)); };

  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  char buf[256];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">Greedy evaluation return</text>\n";
  for (int k = 0; k <= 5; ++k) {
    const double e = xmax * k / 5.0, v = ymin + (ymax - ymin) * k / 5.0;
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n", X(e), top, X(e),
                  top + ph);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.0f</text>\n", X(e), top + ph + 18, e);
    os << buf;
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#ddd\"/>\n", left, Y(v),
                  left + pw, Y(v));
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.2f</text>\n", left - 6, Y(v) + 4, v);
    os << buf;
  }
  if (ymin < 0 && ymax > 0) {
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#888\" stroke-dasharray=\"4 3\"/>\n",
                  left, Y(0), left + pw, Y(0));
    os << buf;
  }
  os << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"black\"/>\n";
  os << "<text x=\"" << left + pw / 2 << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">training episodes</text>\n";

  for (std::size_t i = 0; i < runs.size(); ++i) {
    const char* c = colors[i % std::size(colors)];
    const auto& agg = runs[i].agg;
    std::string band, line;
    for (const auto& a : agg) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", X(static_cast<double>(a.episode)), Y(a.max));
      band += buf;
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", X(static_cast<double>(a.episode)), Y(a.mean));
      line += buf;
    }
    for (auto it = agg.rbegin(); it != agg.rend(); ++it) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", X(static_cast<double>(it->episode)), Y(it->min));
      band += buf;
    }
    os << "<polygon points=\"" << band << "\" fill=\"" << c << "\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    os << "<polyline points=\"" << line << "\" fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.8\"/>\n";
    const double ly = top + 10 + 20.0 * static_cast<double>(i);
    std::snprintf(buf, sizeof buf, "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"%s\" stroke-width=\"3\"/>\n",
                  left + pw + 12, ly, left + pw + 32, ly, c);
    os << buf;
    os << "<text x=\"" << left + pw + 38 << "\" y=\"" << ly + 4 << "\">" << xml_escape(runs[i].label) << "</text>\n";
  }
  os << "</svg>\n";
  if (!os) throw std::runtime_error("failed writing '" + path.string() + "'");
}

}  // namespace

std::vector<PlotSummary> emit_plots(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw std::runtime_error("plot: no run directories given");
  std::vector<LoadedRun> runs;
  for (const auto& d : run_dirs) runs.push_back(load_run(d));
  fs::create_directories(out_dir);
  write_svg(out_dir / "returns.svg", runs);

  std::ofstream csv(out_dir / "summary.csv", std::ios::trunc);
  csv << "label,n_seeds,final_mean,final_min,final_max,threshold_episode_mean,seeds_crossed\n";
  std::vector<PlotSummary> out;
  for (const auto& r : runs) {
    const auto& s = r.summary;
    csv << s.label << ',' << s.n_seeds << ',' << fmt(s.final_mean) << ',' << fmt(s.final_min) << ',' << fmt(s.final_max)
        << ',' << (s.mean_threshold_episode ? fmt(*s.mean_threshold_episode) : std::string("")) << ',' << s.seeds_crossed
        << '\n';
    out.push_back(s);
  }
  if (!csv) throw std::runtime_error("cannot write summary in '" + out_dir.string() + "'");
  return out;
}

}  // namespace indcomm::experiment
