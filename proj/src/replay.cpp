#include "indcomm/replay.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace indcomm::replay {

void Episode::validate() const {
  const std::size_t n = rewards.size();
  if (n == 0) throw std::invalid_argument("episode: empty");
  if (observations.size() != n || actions.size() != n || dones.size() != n) {
    throw std::invalid_argument("episode: sequence lengths differ");
  }
  const std::size_t agents = observations.front().size();
  if (agents == 0) throw std::invalid_argument("episode: no agents");
  const std::size_t width = observations.front().front().size();
  for (std::size_t t = 0; t < n; ++t) {
    if (observations[t].size() != agents || actions[t].size() != agents) {
      throw std::invalid_argument("episode: agent count changes at step " + std::to_string(t));
    }
    for (const auto& o : observations[t]) {
      if (o.size() != width) throw std::invalid_argument("episode: observation width changes at step " + std::to_string(t));
    }
    if (dones[t] && t + 1 != n) throw std::invalid_argument("episode: done before the final step");
  }
}

EpisodeBatch EpisodeBatch::from_episodes(std::span<const Episode* const> episodes) {
  if (episodes.empty()) throw std::invalid_argument("episode batch: no episodes");
  EpisodeBatch b;
  b.batch = episodes.size();
  b.n_agents = episodes.front()->n_agents();
  b.obs_dim = episodes.front()->observations.front().front().size();
  for (const Episode* e : episodes) {
    if (e->n_agents() != b.n_agents || e->observations.front().front().size() != b.obs_dim) {
      throw std::invalid_argument("episode batch: episodes disagree on agents or observation width");
    }
    b.steps = std::max(b.steps, e->length());
    b.lengths.push_back(e->length());
  }
  const std::size_t rows = b.steps * b.batch;
  b.obs.assign(b.n_agents, std::vector<double>(rows * b.obs_dim, 0.0));
  b.actions.assign(b.n_agents, std::vector<std::size_t>(rows, 0));
  b.rewards.assign(rows, 0.0);
  b.terminal.assign(rows, 0.0);
  b.mask.assign(rows, 0.0);
  for (std::size_t k = 0; k < b.batch; ++k) {
    const Episode& e = *episodes[k];
    for (std::size_t t = 0; t < e.length(); ++t) {
      const std::size_t row = t * b.batch + k;
      for (std::size_t a = 0; a < b.n_agents; ++a) {
        std::copy(e.observations[t][a].begin(), e.observations[t][a].end(), b.obs[a].begin() + row * b.obs_dim);
        b.actions[a][row] = e.actions[t][a];
      }
      b.rewards[row] = e.rewards[t];
      b.terminal[row] = e.dones[t] ? 1.0 : 0.0;
      b.mask[row] = 1.0;
    }
  }
  return b;
}

double EpisodeBatch::valid_steps() const { return std::accumulate(mask.begin(), mask.end(), 0.0); }

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw std::invalid_argument("replay buffer: capacity must be positive");
}

void ReplayBuffer::push(Episode episode) {
  episode.validate();
  episodes_.push_back(std::move(episode));
  serials_.push_back(next_serial_++);
  while (episodes_.size() > capacity_) {
    episodes_.pop_front();
    serials_.pop_front();
  }
}

std::vector<std::size_t> ReplayBuffer::sample_indices(std::size_t batch, Rng& rng) const {
  if (!can_sample(batch)) {
    throw std::invalid_argument("replay buffer: cannot sample " + std::to_string(batch) + " episodes from " +
                                std::to_string(size()));
  }
  std::vector<std::size_t> order(size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < batch; ++i) std::swap(order[i], order[i + rng.index(order.size() - i)]);
  order.resize(batch);
  return order;
}

EpisodeBatch ReplayBuffer::sample(std::size_t batch, Rng& rng) const {
  const auto idx = sample_indices(batch, rng);
  std::vector<const Episode*> picked;
  picked.reserve(idx.size());
  for (auto i : idx) picked.push_back(&episodes_[i]);
  return EpisodeBatch::from_episodes(picked);
}

}  // namespace indcomm::replay
