#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "indcomm/envs.hpp"
#include "indcomm/rng.hpp"

namespace indcomm::replay {

/// One stored episode. Index t holds the joint observation the agents acted
/// on, their joint action, the team reward and whether the episode ended.
struct Episode {
  std::vector<envs::JointObservation> observations;
  std::vector<std::vector<std::size_t>> actions;
  std::vector<double> rewards;
  std::vector<bool> dones;

  std::size_t length() const { return rewards.size(); }
  std::size_t n_agents() const { return observations.empty() ? 0 : observations.front().size(); }
  /// Throws std::invalid_argument unless every sequence has the same
  /// non-zero length, agent/observation widths are consistent and only the
  /// final step is marked done.
  void validate() const;
};

/// Episodes padded to a common length, time-major: entry t * batch + b is
/// step t of episode b. Padding has mask 0 and contributes nothing to losses.
struct EpisodeBatch {
  std::size_t batch = 0;
  std::size_t steps = 0;
  std::size_t n_agents = 0;
  std::size_t obs_dim = 0;
  std::vector<std::vector<double>> obs;              // per agent, [steps*batch x obs_dim]
  std::vector<std::vector<std::size_t>> actions;     // per agent, [steps*batch]
  std::vector<double> rewards;                       // [steps*batch]
  std::vector<double> terminal;                      // 1 where the episode ended
  std::vector<double> mask;                          // 1 on real steps
  std::vector<std::size_t> lengths;                  // per episode

  static EpisodeBatch from_episodes(std::span<const Episode* const> episodes);
  double valid_steps() const;
};

/// FIFO store of whole episodes.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 5000);

  void push(Episode episode);
  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool can_sample(std::size_t batch) const { return batch > 0 && size() >= batch; }

  /// i = 0 is the oldest stored episode.
  const Episode& at(std::size_t i) const { return episodes_.at(i); }
  /// Insertion serial number of the i-th stored episode (0 for the first push).
  std::uint64_t serial_at(std::size_t i) const { return serials_.at(i); }

  /// Distinct positions, uniform without replacement.
  std::vector<std::size_t> sample_indices(std::size_t batch, Rng& rng) const;
  EpisodeBatch sample(std::size_t batch, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::deque<Episode> episodes_;
  std::deque<std::uint64_t> serials_;
  std::uint64_t next_serial_ = 0;
};

}  // namespace indcomm::replay
