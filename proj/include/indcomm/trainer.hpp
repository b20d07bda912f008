#pragma once

// Independent deep Q-learning with optional parameter sharing and learned
// communication.
//
// Under communication every agent j encodes its current observation into a
// message m_j = g_j(o_j). Agent i's Q-network input is
//
//   [ o_i | one-hot(i) if sharing | m_j for j != i in agent order | m_i ]
//
// Without parameter sharing the incoming messages are detached on agent i's
// tape and its own message stays attached, so the loss of agent i reaches
// its own communication parameters and nobody else's. The two ablation
// flags (`own_message`, `detach`) reproduce the failure modes of dropping
// either half of that wiring.

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "indcomm/autodiff.hpp"
#include "indcomm/envs.hpp"
#include "indcomm/nn.hpp"
#include "indcomm/replay.hpp"
#include "indcomm/rng.hpp"

namespace indcomm::train {

using ad::Tape;
using ad::Tensor;

struct Mode {
  bool param_sharing = false;
  bool communication = false;

  /// "PS+IQL", "NPS+IQL+COMM", ...
  std::string label() const;
};

/// How messages enter agent i's Q input.
struct Wiring {
  bool own_message = true;
  bool detach_incoming = true;
};

struct TrainerConfig {
  Mode mode;
  std::size_t hidden = 64;
  std::size_t msg_dim = 64;
  std::size_t comm_hidden = 64;
  double gamma = 0.99;
  nn::RmsPropOptions optim;
  double grad_clip = 0.0;  // 0 disables clipping
  std::size_t target_interval = 200;
  // Without parameter sharing.
  bool own_message = true;
  bool detach = true;
  // With parameter sharing: incoming messages stay attached; the own message
  // is optional and off by default.
  bool ps_own_message = false;

  /// Wiring implied by the mode and flags.
  Wiring wiring() const;
};

struct EpsilonSchedule {
  double start = 1.0;
  double end = 0.05;
  std::size_t horizon = 50000;
};

/// Linear from `start` to `end` over `horizon` episodes, then constant.
double epsilon_at(const EpsilonSchedule& schedule, std::size_t episode);

/// Parameters owned by one agent (or by the whole team under sharing).
struct AgentBundle {
  nn::QNetwork policy;
  nn::QNetwork policy_target;
  std::optional<nn::CommNetwork> comm;
  std::optional<nn::CommNetwork> comm_target;
  nn::RmsProp optimizer;

  nn::ParameterList policy_params() const { return policy.parameters(); }
  nn::ParameterList comm_params() const;
  /// policy then comm, the order the optimizer sees them in.
  nn::ParameterList live_params() const;
  nn::ParameterList target_params() const;
};

struct TrainStats {
  std::vector<double> td_loss;           // per agent
  std::vector<double> policy_grad_norm;  // per bundle
  std::vector<double> comm_grad_norm;    // per bundle, 0 without communication
  double mean_loss() const;
};

struct ActResult {
  std::vector<std::size_t> actions;
  std::vector<Tensor> messages;  // empty without communication
  std::vector<Tensor> hidden;    // next recurrent state per agent
};

class Trainer {
 public:
  Trainer(const TrainerConfig& config, const envs::EnvSpec& spec, Rng& rng);
  Trainer(const Trainer&) = delete;
  Trainer& operator=(const Trainer&) = delete;

  const TrainerConfig& config() const { return config_; }
  const envs::EnvSpec& env_spec() const { return spec_; }
  std::size_t n_agents() const { return spec_.n_agents; }
  std::size_t q_input_width() const;

  std::size_t num_bundles() const { return bundles_.size(); }
  const AgentBundle& bundle(std::size_t b) const { return bundles_.at(b); }
  AgentBundle& bundle(std::size_t b) { return bundles_.at(b); }
  /// Bundle that controls agent i.
  std::size_t bundle_of(std::size_t agent) const { return config_.mode.param_sharing ? 0 : agent; }

  std::vector<Tensor> initial_hidden() const;

  /// Epsilon-greedy joint action. Messages are broadcast within the same
  /// step; nothing is recorded for gradients.
  ActResult act(const envs::JointObservation& obs, const std::vector<Tensor>& hidden, double epsilon,
                Rng& rng) const;

  /// Rolls out one episode, optionally pushing it to `buffer`. Returns the
  /// undiscounted team return.
  double run_episode(envs::Environment& env, replay::ReplayBuffer* buffer, double epsilon, Rng& rng,
                     replay::Episode* record = nullptr) const;

  /// One gradient step for every bundle on a batch of episodes.
  TrainStats train_batch(const replay::EpisodeBatch& batch);

  /// Hard-copies live into target parameters when the counter is a multiple
  /// of the target interval. Returns whether a copy happened.
  bool maybe_sync_targets(std::size_t episode_counter);
  void sync_targets();

  /// Agent i's TD loss recorded on `tape`, exactly as train_batch builds it.
  /// Targets come from the target networks and are constants.
  Tensor agent_loss(Tape& tape, std::size_t agent, const replay::EpisodeBatch& batch) const;

  /// Q input of agent i from its observation rows and every agent's message.
  Tensor q_input(Tape& tape, std::size_t agent, const Tensor& obs, const std::vector<Tensor>& messages) const;

 private:
  void check_batch(const replay::EpisodeBatch& batch) const;
  std::vector<Tensor> observation_tensors(const replay::EpisodeBatch& batch) const;
  /// Messages as seen by agent i's loss. Those that will be detached anyway
  /// are computed without recording.
  std::vector<Tensor> messages_for(Tape& tape, std::size_t agent, const std::vector<Tensor>& obs) const;
  std::vector<Tensor> target_messages(const std::vector<Tensor>& obs) const;
  std::vector<double> td_targets(std::size_t agent, const replay::EpisodeBatch& batch, const std::vector<Tensor>& obs,
                                 const std::vector<Tensor>& target_msgs) const;
  Tensor td_loss(Tape& tape, std::size_t agent, const replay::EpisodeBatch& batch, const std::vector<Tensor>& obs,
                 const std::vector<Tensor>& messages, const std::vector<double>& targets) const;

  TrainerConfig config_;
  Wiring wiring_;
  envs::EnvSpec spec_;
  std::vector<AgentBundle> bundles_;
};

/// Per-loss gradient norms under one wiring: grad[i][j] is the norm of the
/// gradient of agent i's loss with respect to bundle j's parameters.
struct WiringReport {
  std::string name;
  Wiring wiring;
  std::vector<std::vector<double>> comm_grad;
  std::vector<std::vector<double>> policy_grad;
  /// For each bundle j, the number of agent losses that produced a non-zero
  /// gradient on its communication parameters (minimum over batches).
  std::vector<std::size_t> comm_contributions;
  /// Batches on which agent i's own communication gradient was non-zero.
  std::vector<std::size_t> own_nonzero;
};

struct GradientFlowReport {
  std::vector<WiringReport> wirings;  // incoming-only, attached, proposed
  std::size_t batches = 0;
  /// Incoming-only wiring: every communication gradient is exactly zero.
  bool incoming_only_silent = true;
  /// Attached wiring: every communication network receives gradient from all losses.
  bool attached_accumulates = true;
  /// Proposed wiring: the loss of agent i touches only agent i's parameters,
  /// and its own communication gradient is non-zero on at least 95% of batches.
  bool proposed_isolated = true;

  bool ok() const { return incoming_only_silent && attached_accumulates && proposed_isolated; }
  std::string to_text() const;
};

/// Random episodes matching `spec`, for gradient inspection.
replay::EpisodeBatch random_batch(const envs::EnvSpec& spec, std::size_t batch, std::size_t max_len, Rng& rng);

/// Builds communicating trainers (no parameter sharing) with random
/// parameters and inspects per-loss gradients on `batches` random batches
/// under three wirings: incoming messages only, all messages attached, and
/// own message attached with incoming detached.
GradientFlowReport verify_gradient_flow(const TrainerConfig& config, const envs::EnvSpec& spec,
                                        std::size_t batches, Rng& rng);

}  // namespace indcomm::train
