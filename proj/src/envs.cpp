#include "indcomm/envs.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace indcomm::envs {

namespace {

void check_joint_action(std::span<const std::size_t> actions, const EnvSpec& spec, const char* env) {
  if (actions.size() != spec.n_agents) {
    throw std::invalid_argument(std::string(env) + ": expected " + std::to_string(spec.n_agents) +
                                " actions, got " + std::to_string(actions.size()));
  }
  for (std::size_t i = 0; i < actions.size(); ++i) {
    if (actions[i] >= spec.n_actions) {
      throw std::invalid_argument(std::string(env) + ": invalid action " + std::to_string(actions[i]) +
                                  " for agent " + std::to_string(i));
    }
  }
}

Cell moved(Cell c, PPAction a) {
  switch (a) {
    case PPAction::kUp: --c.y; break;
    case PPAction::kDown: ++c.y; break;
    case PPAction::kLeft: --c.x; break;
    case PPAction::kRight: ++c.x; break;
    default: break;
  }
  return c;
}

}  // namespace

// ---------------------------------------------------------------------------

PredatorPrey::PredatorPrey(const PredatorPreyConfig& config, std::uint64_t seed)
    : config_(config), rng_(seed, 0x7070) {
  if (config.grid == 0 || config.n_agents == 0 || config.max_steps == 0 || config.view == 0 ||
      config.view % 2 == 0) {
    throw std::invalid_argument("predator_prey: grid, n_agents, max_steps must be positive and view odd");
  }
  if (config.n_agents + config.n_prey > config.grid * config.grid) {
    throw std::invalid_argument("predator_prey: " + std::to_string(config.grid) + "x" + std::to_string(config.grid) +
                                " grid cannot hold " + std::to_string(config.n_agents) + " predators and " +
                                std::to_string(config.n_prey) + " prey");
  }
  spec_.n_agents = config.n_agents;
  spec_.obs_dim = obs_dim_for(config.view);
  spec_.n_actions = kPPActions;
  spec_.max_steps = config.max_steps;
  spec_.notes = "team reward: +capture*N per capture, -solo*N per lone catch, -step*N per step";
}

bool PredatorPrey::in_bounds(const Cell& c) const {
  const int g = static_cast<int>(config_.grid);
  return c.x >= 0 && c.y >= 0 && c.x < g && c.y < g;
}

bool PredatorPrey::predator_at(const Cell& c, std::size_t skip) const {
  for (std::size_t i = 0; i < predators_.size(); ++i) {
    if (i != skip && predators_[i] == c) return true;
  }
  return false;
}

bool PredatorPrey::prey_at(const Cell& c, std::size_t skip) const {
  for (std::size_t i = 0; i < prey_.size(); ++i) {
    if (i != skip && alive_[i] && prey_[i] == c) return true;
  }
  return false;
}

JointObservation PredatorPrey::reset() {
  const std::size_t cells = config_.grid * config_.grid;
  const std::size_t need = config_.n_agents + config_.n_prey;
  std::vector<std::size_t> order(cells);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Partial Fisher-Yates: the first `need` entries are a uniform sample of distinct cells.
  for (std::size_t i = 0; i < need; ++i) {
    std::swap(order[i], order[i + rng_.index(cells - i)]);
  }
  auto to_cell = [&](std::size_t k) {
    return Cell{static_cast<int>(k % config_.grid), static_cast<int>(k / config_.grid)};
  };
  predators_.clear();
  prey_.clear();
  for (std::size_t i = 0; i < config_.n_agents; ++i) predators_.push_back(to_cell(order[i]));
  for (std::size_t i = 0; i < config_.n_prey; ++i) prey_.push_back(to_cell(order[config_.n_agents + i]));
  alive_.assign(config_.n_prey, true);
  steps_ = 0;
  return observe();
}

void PredatorPrey::set_state(std::vector<Cell> predators, std::vector<Cell> prey, std::vector<bool> alive) {
  if (predators.size() != config_.n_agents || prey.size() != alive.size()) {
    throw std::invalid_argument("predator_prey: inconsistent state");
  }
  predators_ = std::move(predators);
  prey_ = std::move(prey);
  alive_ = std::move(alive);
  steps_ = 0;
}

JointObservation PredatorPrey::observe() const {
  const int half = static_cast<int>(config_.view / 2);
  const std::size_t window = config_.view * config_.view;
  const double span = config_.grid > 1 ? static_cast<double>(config_.grid - 1) : 1.0;
  JointObservation out;
  out.reserve(predators_.size());
  for (const Cell& self : predators_) {
    Observation o(spec_.obs_dim, 0.0);
    o[0] = self.x / span;
    o[1] = self.y / span;
    double* pred = o.data() + 2;
    double* prey = pred + window;
    std::size_t k = 0;
    for (int dy = -half; dy <= half; ++dy) {
      for (int dx = -half; dx <= half; ++dx, ++k) {
        const Cell c{self.x + dx, self.y + dy};
        if (!in_bounds(c)) {
          pred[k] = -1.0;
          prey[k] = -1.0;
          continue;
        }
        pred[k] = predator_at(c, predators_.size()) ? 1.0 : 0.0;
        prey[k] = prey_at(c, prey_.size()) ? 1.0 : 0.0;
      }
    }
    out.push_back(std::move(o));
  }
  return out;
}

StepResult PredatorPrey::step(std::span<const std::size_t> actions) {
  check_joint_action(actions, spec_, "predator_prey");
  if (predators_.empty()) throw std::logic_error("predator_prey: step before reset");

  for (std::size_t i = 0; i < predators_.size(); ++i) {
    const auto a = static_cast<PPAction>(actions[i]);
    if (a == PPAction::kStay || a == PPAction::kCatch) continue;
    const Cell target = moved(predators_[i], a);
    if (in_bounds(target) && !predator_at(target, i) && !prey_at(target, prey_.size())) {
      predators_[i] = target;
    }
  }

  StepResult result;
  std::vector<std::size_t> catchers(prey_.size(), 0);
  for (std::size_t p = 0; p < prey_.size(); ++p) {
    if (!alive_[p]) continue;
    for (std::size_t i = 0; i < predators_.size(); ++i) {
      if (static_cast<PPAction>(actions[i]) == PPAction::kCatch && adjacent(predators_[i], prey_[p])) {
        ++catchers[p];
      }
    }
  }
  for (std::size_t i = 0; i < predators_.size(); ++i) {
    if (static_cast<PPAction>(actions[i]) != PPAction::kCatch) continue;
    bool near_prey = false, joined = false;
    for (std::size_t p = 0; p < prey_.size(); ++p) {
      if (alive_[p] && adjacent(predators_[i], prey_[p])) {
        near_prey = true;
        joined = joined || catchers[p] >= 2;
      }
    }
    if (near_prey && !joined) ++result.info.solo_attempts;
  }
  for (std::size_t p = 0; p < prey_.size(); ++p) {
    if (alive_[p] && catchers[p] >= 2) {
      alive_[p] = false;
      ++result.info.captures;
    }
  }

  static constexpr PPAction kPreyMoves[] = {PPAction::kStay, PPAction::kUp, PPAction::kDown, PPAction::kLeft,
                                            PPAction::kRight};
  for (std::size_t p = 0; p < prey_.size(); ++p) {
    if (!alive_[p]) continue;
    std::vector<Cell> options;
    for (PPAction a : kPreyMoves) {
      const Cell c = moved(prey_[p], a);
      if (a == PPAction::kStay || (in_bounds(c) && !predator_at(c, predators_.size()) && !prey_at(c, p))) {
        options.push_back(c);
      }
    }
    prey_[p] = options[rng_.index(options.size())];
  }

  ++steps_;
  const double n = static_cast<double>(config_.n_agents);
  result.reward = config_.capture_reward * n * static_cast<double>(result.info.captures) -
                  config_.solo_penalty * n * static_cast<double>(result.info.solo_attempts) -
                  config_.step_penalty * n;
  const bool all_captured = std::none_of(alive_.begin(), alive_.end(), [](bool a) { return a; });
  result.done = all_captured || steps_ >= config_.max_steps;
  result.observations = observe();
  return result;
}

// ---------------------------------------------------------------------------

SignalGame::SignalGame(std::uint64_t seed) : rng_(seed, 0x5161) {
  spec_.n_agents = 2;
  spec_.obs_dim = 2;
  spec_.n_actions = 2;
  spec_.max_steps = 1;
  spec_.notes = "reward 1 iff agent 1 names the goal bit only agent 0 can see";
}

JointObservation SignalGame::observe() const {
  Observation speaker(2, 0.0);
  speaker[static_cast<std::size_t>(goal_)] = 1.0;
  return {speaker, Observation(2, 0.0)};
}

JointObservation SignalGame::reset() {
  goal_ = static_cast<int>(rng_.index(2));
  done_ = false;
  return observe();
}

void SignalGame::set_goal(int goal) {
  if (goal != 0 && goal != 1) throw std::invalid_argument("signal_game: goal must be 0 or 1");
  goal_ = goal;
  done_ = false;
}

StepResult SignalGame::step(std::span<const std::size_t> actions) {
  check_joint_action(actions, spec_, "signal_game");
  if (done_) throw std::logic_error("signal_game: episode already finished");
  StepResult result;
  result.reward = actions[1] == static_cast<std::size_t>(goal_) ? 1.0 : 0.0;
  result.done = true;
  done_ = true;
  result.observations = observe();
  return result;
}

// ---------------------------------------------------------------------------

TwoStateMdp::TwoStateMdp(std::uint64_t seed, std::size_t max_steps) : rng_(seed, 0x2257) {
  if (max_steps == 0) throw std::invalid_argument("two_state: max_steps must be positive");
  spec_.n_agents = 1;
  spec_.obs_dim = 2;
  spec_.n_actions = 2;
  spec_.max_steps = max_steps;
  spec_.notes = "two-state MDP with terminating actions";
}

TwoStateMdp::Transition TwoStateMdp::transition(int state, std::size_t action) {
  if (state == 0) return action == 0 ? Transition{0.0, 1, false} : Transition{0.5, 0, true};
  return action == 0 ? Transition{1.0, 1, true} : Transition{0.0, 0, false};
}

JointObservation TwoStateMdp::observe() const {
  Observation o(2, 0.0);
  o[static_cast<std::size_t>(state_)] = 1.0;
  return {o};
}

JointObservation TwoStateMdp::reset() {
  state_ = static_cast<int>(rng_.index(2));
  steps_ = 0;
  return observe();
}

StepResult TwoStateMdp::step(std::span<const std::size_t> actions) {
  check_joint_action(actions, spec_, "two_state");
  const Transition tr = transition(state_, actions[0]);
  state_ = tr.next;
  ++steps_;
  StepResult result;
  result.reward = tr.reward;
  result.done = tr.terminal || steps_ >= spec_.max_steps;
  result.observations = observe();
  return result;
}

// ---------------------------------------------------------------------------

bool is_known_env(const std::string& name) {
  return name == "predator_prey" || name == "pp_small" || name == "signal_game" || name == "two_state";
}

std::unique_ptr<Environment> make_env(const std::string& name, const EnvOverrides& overrides, std::uint64_t seed) {
  if (name == "predator_prey" || name == "pp_small") {
    PredatorPreyConfig cfg;
    if (name == "pp_small") {
      cfg.grid = 5;
      cfg.n_agents = 2;
      cfg.n_prey = 1;
    }
    cfg.grid = overrides.grid.value_or(cfg.grid);
    cfg.n_agents = overrides.n_agents.value_or(cfg.n_agents);
    cfg.n_prey = overrides.n_prey.value_or(cfg.n_prey);
    cfg.max_steps = overrides.max_steps.value_or(cfg.max_steps);
    cfg.view = overrides.view.value_or(cfg.view);
    return std::make_unique<PredatorPrey>(cfg, seed);
  }
  if (overrides.grid || overrides.n_agents || overrides.n_prey || overrides.view) {
    throw std::invalid_argument(name + ": grid/n_agents/n_prey/view overrides apply to predator-prey only");
  }
  if (name == "signal_game") {
    if (overrides.max_steps && *overrides.max_steps != 1) {
      throw std::invalid_argument("signal_game: episodes are exactly one step");
    }
    return std::make_unique<SignalGame>(seed);
  }
  if (name == "two_state") return std::make_unique<TwoStateMdp>(seed, overrides.max_steps.value_or(20));
  throw std::invalid_argument("unknown environment '" + name + "'");
}

}  // namespace indcomm::envs
