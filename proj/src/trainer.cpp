#include "indcomm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace indcomm::train {

std::string Mode::label() const {
  std::string s = param_sharing ? "PS+IQL" : "NPS+IQL";
  if (communication) s += "+COMM";
  return s;
}

Wiring TrainerConfig::wiring() const {
  if (mode.param_sharing) return Wiring{ps_own_message, false};
  return Wiring{own_message, detach};
}

double epsilon_at(const EpsilonSchedule& schedule, std::size_t episode) {
  if (schedule.horizon == 0 || episode >= schedule.horizon) return schedule.end;
  const double frac = static_cast<double>(episode) / static_cast<double>(schedule.horizon);
  return schedule.start + frac * (schedule.end - schedule.start);
}

nn::ParameterList AgentBundle::comm_params() const {
  return comm ? comm->parameters() : nn::ParameterList{};
}

nn::ParameterList AgentBundle::live_params() const {
  auto out = policy.parameters();
  for (auto& p : comm_params()) out.push_back(std::move(p));
  return out;
}

nn::ParameterList AgentBundle::target_params() const {
  auto out = policy_target.parameters();
  if (comm_target) {
    for (auto& p : comm_target->parameters()) out.push_back(std::move(p));
  }
  return out;
}

double TrainStats::mean_loss() const {
  if (td_loss.empty()) return 0.0;
  double s = 0.0;
  for (double v : td_loss) s += v;
  return s / static_cast<double>(td_loss.size());
}

namespace {

std::size_t argmax(std::span<const double> q) {
  std::size_t best = 0;
  for (std::size_t a = 1; a < q.size(); ++a) {
    if (q[a] > q[best]) best = a;
  }
  return best;
}

}  // namespace

Trainer::Trainer(const TrainerConfig& config, const envs::EnvSpec& spec, Rng& rng)
    : config_(config), wiring_(config.wiring()), spec_(spec) {
  if (spec.n_agents == 0 || spec.obs_dim == 0 || spec.n_actions == 0) {
    throw std::invalid_argument("trainer: environment needs agents, observations and actions");
  }
  if (config.hidden == 0) throw std::invalid_argument("trainer: hidden width must be positive");
  if (config.mode.communication && (config.msg_dim == 0 || config.comm_hidden == 0)) {
    throw std::invalid_argument("trainer: message and communication hidden widths must be positive");
  }
  if (!(config.gamma >= 0.0 && config.gamma < 1.0)) throw std::invalid_argument("trainer: gamma must be in [0, 1)");
  if (config.target_interval == 0) throw std::invalid_argument("trainer: target interval must be positive");

  const std::size_t n_bundles = config.mode.param_sharing ? 1 : spec.n_agents;
  bundles_.reserve(n_bundles);
  for (std::size_t b = 0; b < n_bundles; ++b) {
    nn::QNetwork policy({q_input_width(), config.hidden, spec.n_actions}, rng);
    std::optional<nn::CommNetwork> comm;
    if (config.mode.communication) comm.emplace(nn::CommNetworkDims{spec.obs_dim, config.comm_hidden, config.msg_dim}, rng);
    AgentBundle bundle{policy, policy.frozen_copy(), comm, std::nullopt, {}};
    if (comm) bundle.comm_target = comm->frozen_copy();
    bundle.optimizer = nn::RmsProp(nn::tensors_of(bundle.live_params()), config.optim);
    bundles_.push_back(std::move(bundle));
  }
}

std::size_t Trainer::q_input_width() const {
  std::size_t width = spec_.obs_dim;
  if (config_.mode.param_sharing) width += spec_.n_agents;
  if (config_.mode.communication) {
    const std::size_t n_msgs = spec_.n_agents - 1 + (wiring_.own_message ? 1 : 0);
    width += n_msgs * config_.msg_dim;
  }
  return width;
}

std::vector<Tensor> Trainer::initial_hidden() const {
  std::vector<Tensor> h;
  for (std::size_t i = 0; i < n_agents(); ++i) h.push_back(bundles_[bundle_of(i)].policy.initial_hidden(1));
  return h;
}

Tensor Trainer::q_input(Tape& tape, std::size_t agent, const Tensor& obs, const std::vector<Tensor>& messages) const {
  const std::size_t rows = obs.dim(0);
  std::vector<Tensor> parts{obs};
  if (config_.mode.param_sharing) {
    Tensor id = Tensor::zeros({rows, n_agents()});
    auto v = id.mutable_values();
    for (std::size_t r = 0; r < rows; ++r) v[r * n_agents() + agent] = 1.0;
    parts.push_back(id);
  }
  if (config_.mode.communication) {
    if (messages.size() != n_agents()) throw std::invalid_argument("trainer: one message per agent expected");
    for (std::size_t j = 0; j < n_agents(); ++j) {
      if (j == agent) continue;
      parts.push_back(wiring_.detach_incoming ? ad::detach(messages[j]) : messages[j]);
    }
    if (wiring_.own_message) parts.push_back(messages[agent]);
  }
  return tape.concat(parts, 1);
}

ActResult Trainer::act(const envs::JointObservation& obs, const std::vector<Tensor>& hidden, double epsilon,
                       Rng& rng) const {
  if (obs.size() != n_agents() || hidden.size() != n_agents()) {
    throw std::invalid_argument("trainer: act needs one observation and hidden state per agent");
  }
  Tape tape = Tape::inference();
  std::vector<Tensor> obs_t;
  for (const auto& o : obs) {
    if (o.size() != spec_.obs_dim) throw std::invalid_argument("trainer: observation width mismatch");
    obs_t.push_back(ad::tensor(o, {1, o.size()}));
  }
  ActResult out;
  if (config_.mode.communication) {
    for (std::size_t j = 0; j < n_agents(); ++j) out.messages.push_back(bundles_[bundle_of(j)].comm->forward(tape, obs_t[j]));
  }
  for (std::size_t i = 0; i < n_agents(); ++i) {
    const auto& net = bundles_[bundle_of(i)].policy;
    auto res = net.forward(tape, q_input(tape, i, obs_t[i], out.messages), hidden[i]);
    std::size_t action;
    if (rng.uniform() < epsilon) {
      action = rng.index(spec_.n_actions);
    } else {
      action = argmax(res.q.values());
    }
    out.actions.push_back(action);
    out.hidden.push_back(res.hidden);
  }
  return out;
}

double Trainer::run_episode(envs::Environment& env, replay::ReplayBuffer* buffer, double epsilon, Rng& rng,
                            replay::Episode* record) const {
  replay::Episode ep;
  auto obs = env.reset();
  auto hidden = initial_hidden();
  double ret = 0.0;
  bool done = false;
  while (!done) {
    auto a = act(obs, hidden, epsilon, rng);
    auto res = env.step(a.actions);
    ep.observations.push_back(std::move(obs));
    ep.actions.push_back(a.actions);
    ep.rewards.push_back(res.reward);
    ep.dones.push_back(res.done);
    ret += res.reward;
    done = res.done;
    obs = std::move(res.observations);
    hidden = std::move(a.hidden);
  }
  if (record) *record = ep;
  if (buffer) buffer->push(std::move(ep));
  return ret;
}

void Trainer::check_batch(const replay::EpisodeBatch& batch) const {
  if (batch.batch == 0 || batch.steps == 0) throw std::invalid_argument("trainer: empty batch");
  if (batch.n_agents != n_agents() || batch.obs_dim != spec_.obs_dim) {
    throw std::invalid_argument("trainer: batch does not match the environment");
  }
}

std::vector<Tensor> Trainer::observation_tensors(const replay::EpisodeBatch& batch) const {
  const std::size_t rows = batch.steps * batch.batch;
  std::vector<Tensor> obs;
  for (std::size_t j = 0; j < n_agents(); ++j) obs.push_back(ad::tensor(batch.obs[j], {rows, batch.obs_dim}));
  return obs;
}

std::vector<Tensor> Trainer::messages_for(Tape& tape, std::size_t agent, const std::vector<Tensor>& obs) const {
  std::vector<Tensor> msgs;
  if (!config_.mode.communication) return msgs;
  Tape off = Tape::inference();
  for (std::size_t j = 0; j < n_agents(); ++j) {
    const bool recorded = j == agent || !wiring_.detach_incoming;
    msgs.push_back(bundles_[bundle_of(j)].comm->forward(recorded ? tape : off, obs[j]));
  }
  return msgs;
}

std::vector<Tensor> Trainer::target_messages(const std::vector<Tensor>& obs) const {
  std::vector<Tensor> msgs;
  if (!config_.mode.communication) return msgs;
  Tape tape = Tape::inference();
  for (std::size_t j = 0; j < n_agents(); ++j) msgs.push_back(bundles_[bundle_of(j)].comm_target->forward(tape, obs[j]));
  return msgs;
}

std::vector<double> Trainer::td_targets(std::size_t agent, const replay::EpisodeBatch& batch,
                                        const std::vector<Tensor>& obs, const std::vector<Tensor>& target_msgs) const {
  Tape tape = Tape::inference();
  const auto& net = bundles_[bundle_of(agent)].policy_target;
  Tensor q = net.unroll(tape, q_input(tape, agent, obs[agent], target_msgs), batch.steps);
  auto best = tape.reduce_max_with_index(q, 1);
  const auto next = best.values.values();
  const std::size_t B = batch.batch, rows = batch.steps * B;
  std::vector<double> y(rows, 0.0);
  for (std::size_t row = 0; row < rows; ++row) {
    if (batch.mask[row] == 0.0) continue;
    y[row] = batch.rewards[row];
    const std::size_t nxt = row + B;
    if (batch.terminal[row] == 0.0 && nxt < rows && batch.mask[nxt] != 0.0) y[row] += config_.gamma * next[nxt];
  }
  return y;
}

Tensor Trainer::td_loss(Tape& tape, std::size_t agent, const replay::EpisodeBatch& batch,
                        const std::vector<Tensor>& obs, const std::vector<Tensor>& messages,
                        const std::vector<double>& targets) const {
  const std::size_t rows = batch.steps * batch.batch;
  const auto& net = bundles_[bundle_of(agent)].policy;
  Tensor q = net.unroll(tape, q_input(tape, agent, obs[agent], messages), batch.steps);
  Tensor taken = tape.gather(q, batch.actions[agent], 1);
  Tensor diff = tape.sub(ad::tensor(targets, {rows}), taken);
  Tensor masked = tape.mul(tape.mul(diff, diff), ad::tensor(batch.mask, {rows}));
  return tape.scale(tape.sum(masked), 1.0 / batch.valid_steps());
}

Tensor Trainer::agent_loss(Tape& tape, std::size_t agent, const replay::EpisodeBatch& batch) const {
  check_batch(batch);
  if (agent >= n_agents()) throw std::out_of_range("trainer: agent index out of range");
  const auto obs = observation_tensors(batch);
  const auto y = td_targets(agent, batch, obs, target_messages(obs));
  return td_loss(tape, agent, batch, obs, messages_for(tape, agent, obs), y);
}

TrainStats Trainer::train_batch(const replay::EpisodeBatch& batch) {
  check_batch(batch);
  const auto obs = observation_tensors(batch);
  const auto target_msgs = target_messages(obs);
  for (auto& b : bundles_) nn::zero_grads(b.live_params());

  TrainStats stats;
  stats.td_loss.resize(n_agents());
  if (config_.mode.param_sharing) {
    // One shared tape: messages feed every other agent's input and the
    // shared parameters collect all of it in a single backward pass.
    Tape tape;
    std::vector<Tensor> msgs;
    if (config_.mode.communication) {
      for (std::size_t j = 0; j < n_agents(); ++j) msgs.push_back(bundles_[0].comm->forward(tape, obs[j]));
    }
    Tensor total;
    for (std::size_t i = 0; i < n_agents(); ++i) {
      Tensor li = td_loss(tape, i, batch, obs, msgs, td_targets(i, batch, obs, target_msgs));
      stats.td_loss[i] = li.item();
      total = i == 0 ? li : tape.add(total, li);
    }
    tape.backward(tape.scale(total, 1.0 / static_cast<double>(n_agents())));
  } else {
    // Every loss is differentiated before any parameter moves, so detached
    // or not, all agents see the same pre-update parameters.
    for (std::size_t i = 0; i < n_agents(); ++i) {
      Tape tape;
      Tensor li = td_loss(tape, i, batch, obs, messages_for(tape, i, obs), td_targets(i, batch, obs, target_msgs));
      stats.td_loss[i] = li.item();
      tape.backward(li);
    }
  }

  for (auto& b : bundles_) {
    stats.policy_grad_norm.push_back(nn::grad_norm(b.policy_params()));
    stats.comm_grad_norm.push_back(nn::grad_norm(b.comm_params()));
    if (config_.grad_clip > 0.0) nn::clip_grad_norm(b.live_params(), config_.grad_clip);
    b.optimizer.step();
  }
  return stats;
}

bool Trainer::maybe_sync_targets(std::size_t episode_counter) {
  if (episode_counter == 0 || episode_counter % config_.target_interval != 0) return false;
  sync_targets();
  return true;
}

void Trainer::sync_targets() {
  for (auto& b : bundles_) nn::sync_target(b.live_params(), b.target_params());
}

// ---------------------------------------------------------------------------

replay::EpisodeBatch random_batch(const envs::EnvSpec& spec, std::size_t batch, std::size_t max_len, Rng& rng) {
  if (batch == 0 || max_len == 0) throw std::invalid_argument("random batch: empty");
  std::vector<replay::Episode> episodes(batch);
  for (auto& e : episodes) {
    const std::size_t len = 1 + rng.index(max_len);
    for (std::size_t t = 0; t < len; ++t) {
      envs::JointObservation joint(spec.n_agents, envs::Observation(spec.obs_dim));
      for (auto& o : joint) {
        for (auto& v : o) v = rng.uniform(-1.0, 1.0);
      }
      std::vector<std::size_t> acts(spec.n_agents);
      for (auto& a : acts) a = rng.index(spec.n_actions);
      e.observations.push_back(std::move(joint));
      e.actions.push_back(std::move(acts));
      e.rewards.push_back(rng.uniform(-1.0, 1.0));
      e.dones.push_back(t + 1 == len && rng.uniform() < 0.5);
    }
  }
  std::vector<const replay::Episode*> ptrs;
  for (const auto& e : episodes) ptrs.push_back(&e);
  return replay::EpisodeBatch::from_episodes(ptrs);
}

GradientFlowReport verify_gradient_flow(const TrainerConfig& config, const envs::EnvSpec& spec,
                                        std::size_t batches, Rng& rng) {
  if (!config.mode.communication || config.mode.param_sharing) {
    throw std::invalid_argument("gradient report: needs communication without parameter sharing");
  }
  if (batches == 0) throw std::invalid_argument("gradient report: needs at least one batch");
  const std::uint64_t init_seed = rng.next();
  const std::uint64_t data_seed = rng.next();
  const std::size_t n = spec.n_agents;

  struct Variant {
    const char* name;
    Wiring wiring;
  };
  const Variant variants[] = {
      {"incoming-only", {false, true}},
      {"attached", {true, false}},
      {"proposed", {true, true}},
  };

  GradientFlowReport report;
  report.batches = batches;
  for (const auto& v : variants) {
    TrainerConfig cfg = config;
    cfg.own_message = v.wiring.own_message;
    cfg.detach = v.wiring.detach_incoming;
    Rng init(init_seed);
    Rng data(data_seed);
    Trainer trainer(cfg, spec, init);

    WiringReport wr;
    wr.name = v.name;
    wr.wiring = v.wiring;
    wr.comm_grad.assign(n, std::vector<double>(n, 0.0));
    wr.policy_grad.assign(n, std::vector<double>(n, 0.0));
    wr.comm_contributions.assign(n, n);
    wr.own_nonzero.assign(n, 0);

    for (std::size_t k = 0; k < batches; ++k) {
      const auto batch = random_batch(spec, 8, std::min<std::size_t>(spec.max_steps, 6), data);
      std::vector<std::size_t> contrib(n, 0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) nn::zero_grads(trainer.bundle(j).live_params());
        Tape tape;
        tape.backward(trainer.agent_loss(tape, i, batch));
        for (std::size_t j = 0; j < n; ++j) {
          const double cg = nn::grad_norm(trainer.bundle(j).comm_params());
          const double pg = nn::grad_norm(trainer.bundle(j).policy_params());
          wr.comm_grad[i][j] = std::max(wr.comm_grad[i][j], cg);
          wr.policy_grad[i][j] = std::max(wr.policy_grad[i][j], pg);
          if (cg != 0.0) ++contrib[j];
          if (j == i && cg != 0.0) ++wr.own_nonzero[i];
          if (v.wiring.own_message && v.wiring.detach_incoming && j != i && (cg != 0.0 || pg != 0.0)) {
            report.proposed_isolated = false;
          }
          if (!v.wiring.own_message && cg != 0.0) report.incoming_only_silent = false;
        }
      }
      for (std::size_t j = 0; j < n; ++j) wr.comm_contributions[j] = std::min(wr.comm_contributions[j], contrib[j]);
    }
    if (v.wiring.own_message && !v.wiring.detach_incoming) {
      for (auto c : wr.comm_contributions) {
        if (c != n) report.attached_accumulates = false;
      }
    } else if (v.wiring.own_message) {
      for (auto c : wr.own_nonzero) {
        if (static_cast<double>(c) < 0.95 * static_cast<double>(batches)) report.proposed_isolated = false;
      }
    }
    report.wirings.push_back(std::move(wr));
  }
  return report;
}

std::string GradientFlowReport::to_text() const {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3);
  for (const auto& w : wirings) {
    const std::size_t n = w.comm_grad.size();
    os << "wiring " << w.name << " (own_message=" << (w.wiring.own_message ? "yes" : "no")
       << ", detach_incoming=" << (w.wiring.detach_incoming ? "yes" : "no") << "), max over " << batches
       << " batches\n";
    os << "  |dL_i/d comm_j|\n";
    for (std::size_t i = 0; i < n; ++i) {
      os << "    L_" << i << ":";
      for (std::size_t j = 0; j < n; ++j) os << ' ' << std::setw(10) << w.comm_grad[i][j];
      os << '\n';
    }
    os << "  |dL_i/d policy_j|\n";
    for (std::size_t i = 0; i < n; ++i) {
      os << "    L_" << i << ":";
      for (std::size_t j = 0; j < n; ++j) os << ' ' << std::setw(10) << w.policy_grad[i][j];
      os << '\n';
    }
    os << "  losses reaching comm_j:";
    for (auto c : w.comm_contributions) os << ' ' << c;
    os << '\n';
  }
  os << "incoming-only silent: " << (incoming_only_silent ? "yes" : "no") << '\n';
  os << "attached accumulates: " << (attached_accumulates ? "yes" : "no") << '\n';
  os << "proposed isolated:    " << (proposed_isolated ? "yes" : "no") << '\n';
  return os.str();
}

}  // namespace indcomm::train
