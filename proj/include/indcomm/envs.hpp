#pragma once

// Decentralised, partially observable multi-agent environments. Every agent
// receives its own observation vector; the reward is a single team scalar.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "indcomm/rng.hpp"

namespace indcomm::envs {

using Observation = std::vector<double>;
using JointObservation = std::vector<Observation>;

struct EnvSpec {
  std::size_t n_agents = 1;
  std::size_t obs_dim = 1;
  std::size_t n_actions = 2;
  std::size_t max_steps = 1;
  std::string notes;
};

struct StepInfo {
  std::size_t captures = 0;
  std::size_t solo_attempts = 0;
};

struct StepResult {
  JointObservation observations;
  double reward = 0.0;  // shared by the whole team
  bool done = false;
  StepInfo info;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual const EnvSpec& spec() const = 0;
  virtual JointObservation reset() = 0;
  /// One action index per agent. Throws std::invalid_argument on a bad action.
  virtual StepResult step(std::span<const std::size_t> actions) = 0;
};

// ---------------------------------------------------------------------------
// Punished predator-prey grid world.
//
// Actions: up, down, left, right, stay, catch. A prey is captured when at
// least two predators in its 4-neighbourhood choose catch in the same step.
// A predator that chooses catch next to a prey, when none of its neighbouring
// prey had a second catcher, counts as a solo attempt. Team reward per step:
//   capture_reward * N * captures - solo_penalty * N * solo_attempts - step_penalty * N
//
// Step order: predators move in index order (blocked or off-grid moves become
// stay), captures are resolved, then surviving prey move uniformly among the
// free neighbouring cells and staying put.
//
// Observation of agent i (obs_dim = 2 + 2 * view * view):
//   [x / (W-1), y / (H-1)], then a view x view window centred on the agent,
//   predator channel first and prey channel second, each row-major from the
//   top-left. Off-grid cells read -1 in both channels.

struct PredatorPreyConfig {
  std::size_t grid = 7;
  std::size_t n_agents = 4;
  std::size_t n_prey = 2;
  std::size_t max_steps = 100;
  std::size_t view = 5;
  double capture_reward = 5.0;
  double step_penalty = 0.1;
  double solo_penalty = 0.75;
};

enum class PPAction : std::size_t { kUp = 0, kDown, kLeft, kRight, kStay, kCatch };
inline constexpr std::size_t kPPActions = 6;

struct Cell {
  int x = 0;
  int y = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

inline bool adjacent(const Cell& a, const Cell& b) {
  const int dx = a.x - b.x, dy = a.y - b.y;
  return dx * dx + dy * dy == 1;
}

class PredatorPrey final : public Environment {
 public:
  PredatorPrey(const PredatorPreyConfig& config, std::uint64_t seed);

  const EnvSpec& spec() const override { return spec_; }
  JointObservation reset() override;
  StepResult step(std::span<const std::size_t> actions) override;

  static std::size_t obs_dim_for(std::size_t view) { return 2 + 2 * view * view; }

  const PredatorPreyConfig& config() const { return config_; }
  const std::vector<Cell>& predators() const { return predators_; }
  const std::vector<Cell>& prey() const { return prey_; }
  const std::vector<bool>& prey_alive() const { return alive_; }
  std::size_t step_count() const { return steps_; }
  JointObservation observe() const;

  /// Places entities directly; used by tests to build specific situations.
  void set_state(std::vector<Cell> predators, std::vector<Cell> prey, std::vector<bool> alive);

 private:
  bool in_bounds(const Cell& c) const;
  bool predator_at(const Cell& c, std::size_t skip) const;
  bool prey_at(const Cell& c, std::size_t skip) const;

  PredatorPreyConfig config_;
  EnvSpec spec_;
  Rng rng_;
  std::vector<Cell> predators_;
  std::vector<Cell> prey_;
  std::vector<bool> alive_;
  std::size_t steps_ = 0;
};

// ---------------------------------------------------------------------------
// Two-agent signalling game: agent 0 sees a hidden goal bit (one-hot), agent 1
// sees zeros. Reward 1 iff agent 1's action equals the goal bit. One step.

class SignalGame final : public Environment {
 public:
  explicit SignalGame(std::uint64_t seed);

  const EnvSpec& spec() const override { return spec_; }
  JointObservation reset() override;
  StepResult step(std::span<const std::size_t> actions) override;

  int goal() const { return goal_; }
  void set_goal(int goal);

 private:
  JointObservation observe() const;

  EnvSpec spec_;
  Rng rng_;
  int goal_ = 0;
  bool done_ = false;
};

// ---------------------------------------------------------------------------
// Single-agent two-state MDP with known Q*, used as a TD-learning sanity check.
// Observation is the one-hot state; the start state is uniform.
//   state 0: action 0 -> reward 0,   go to state 1
//            action 1 -> reward 0.5, terminate
//   state 1: action 0 -> reward 1,   terminate
//            action 1 -> reward 0,   go to state 0

class TwoStateMdp final : public Environment {
 public:
  struct Transition {
    double reward;
    int next;
    bool terminal;
  };

  explicit TwoStateMdp(std::uint64_t seed, std::size_t max_steps = 20);

  static Transition transition(int state, std::size_t action);

  const EnvSpec& spec() const override { return spec_; }
  JointObservation reset() override;
  StepResult step(std::span<const std::size_t> actions) override;

  int state() const { return state_; }
  void set_state(int state) { state_ = state; }

 private:
  JointObservation observe() const;

  EnvSpec spec_;
  Rng rng_;
  int state_ = 0;
  std::size_t steps_ = 0;
};

// ---------------------------------------------------------------------------

struct EnvOverrides {
  std::optional<std::size_t> grid;
  std::optional<std::size_t> n_agents;
  std::optional<std::size_t> n_prey;
  std::optional<std::size_t> max_steps;
  std::optional<std::size_t> view;
};

/// Names: predator_prey (7x7, 4 predators, 2 prey), pp_small (5x5, 2
/// predators, 1 prey), signal_game, two_state.
std::unique_ptr<Environment> make_env(const std::string& name, const EnvOverrides& overrides,
                                      std::uint64_t seed);
bool is_known_env(const std::string& name);

}  // namespace indcomm::envs
