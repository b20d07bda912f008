#include <doctest.h>

#include <set>
#include <vector>

#include "indcomm/replay.hpp"

using namespace indcomm;
using namespace indcomm::replay;

namespace {

// Episode of `len` steps for `agents` agents; the first observation entry
// carries `tag` so episodes can be told apart after sampling.
Episode make_episode(std::size_t len, double tag, std::size_t agents = 2, std::size_t width = 3, bool done = true) {
  Episode e;
  for (std::size_t t = 0; t < len; ++t) {
    envs::JointObservation obs;
    for (std::size_t a = 0; a < agents; ++a) {
      envs::Observation o(width, static_cast<double>(t));
      o[0] = tag;
      obs.push_back(o);
    }
    e.observations.push_back(obs);
    e.actions.push_back(std::vector<std::size_t>(agents, t % 2));
    e.rewards.push_back(static_cast<double>(t) + 0.5);
    e.dones.push_back(done && t + 1 == len);
  }
  return e;
}

}  // namespace

TEST_CASE("episode validation") {
  CHECK_NOTHROW(make_episode(4, 0).validate());
  CHECK_THROWS(Episode{}.validate());
  Episode early = make_episode(4, 0);
  early.dones[1] = true;
  CHECK_THROWS(early.validate());
  Episode ragged = make_episode(4, 0);
  ragged.rewards.pop_back();
  CHECK_THROWS(ragged.validate());
  Episode wide = make_episode(3, 0);
  wide.observations[2][1].push_back(1.0);
  CHECK_THROWS(wide.validate());
  ReplayBuffer buffer(3);
  CHECK_THROWS(buffer.push(early));
  CHECK(buffer.size() == 0);
}

TEST_CASE("capacity and FIFO eviction") {
  SUBCASE("one push") {
    ReplayBuffer buffer;
    buffer.push(make_episode(2, 0));
    CHECK(buffer.size() == 1);
  }
  SUBCASE("5001 pushes into the default capacity") {
    ReplayBuffer buffer;
    CHECK(buffer.capacity() == 5000);
    for (std::size_t i = 0; i < 5001; ++i) buffer.push(make_episode(1, static_cast<double>(i), 1, 1));
    CHECK(buffer.size() == 5000);
    CHECK(buffer.serial_at(0) == 1);
    CHECK(buffer.at(0).observations[0][0][0] == 1.0);
    CHECK(buffer.at(4999).observations[0][0][0] == 5000.0);
  }
  SUBCASE("three overflows evict in insertion order") {
    ReplayBuffer buffer(4);
    for (std::size_t i = 0; i < 7; ++i) buffer.push(make_episode(1, static_cast<double>(i)));
    CHECK(buffer.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
      CHECK(buffer.serial_at(i) == 3 + i);
      CHECK(buffer.at(i).observations[0][0][0] == static_cast<double>(3 + i));
    }
  }
}

TEST_CASE("padding and mask") {
  Episode a = make_episode(3, 10.0), b = make_episode(5, 20.0);
  std::vector<const Episode*> eps{&a, &b};
  const auto batch = EpisodeBatch::from_episodes(eps);
  CHECK(batch.steps == 5);
  CHECK(batch.batch == 2);
  CHECK(batch.lengths == std::vector<std::size_t>{3, 5});
  double m0 = 0, m1 = 0;
  for (std::size_t t = 0; t < 5; ++t) {
    m0 += batch.mask[t * 2 + 0];
    m1 += batch.mask[t * 2 + 1];
  }
  CHECK(m0 == 3.0);
  CHECK(m1 == 5.0);
  CHECK(batch.valid_steps() == 8.0);

  // Time-major layout, terminal flag on the last real step only.
  CHECK(batch.obs[1][(2 * 2 + 0) * 3 + 0] == 10.0);
  CHECK(batch.obs[1][(4 * 2 + 1) * 3 + 0] == 20.0);
  CHECK(batch.rewards[2 * 2 + 0] == 2.5);
  CHECK(batch.terminal[2 * 2 + 0] == 1.0);
  CHECK(batch.terminal[4 * 2 + 1] == 1.0);
  CHECK(batch.terminal[1 * 2 + 1] == 0.0);
  // Padding is all zeros.
  for (std::size_t t = 3; t < 5; ++t) {
    const std::size_t row = t * 2;
    CHECK(batch.mask[row] == 0.0);
    CHECK(batch.rewards[row] == 0.0);
    CHECK(batch.terminal[row] == 0.0);
    for (std::size_t k = 0; k < 3; ++k) CHECK(batch.obs[0][row * 3 + k] == 0.0);
  }

  Episode other = make_episode(2, 0.0, 3);
  std::vector<const Episode*> mixed{&a, &other};
  CHECK_THROWS(EpisodeBatch::from_episodes(mixed));
}

TEST_CASE("sampling") {
  ReplayBuffer buffer;
  for (std::size_t i = 0; i < 100; ++i) buffer.push(make_episode(1 + i % 4, static_cast<double>(i)));

  SUBCASE("32 distinct episodes") {
    Rng rng(1);
    const auto idx = buffer.sample_indices(32, rng);
    CHECK(idx.size() == 32);
    CHECK(std::set<std::size_t>(idx.begin(), idx.end()).size() == 32);
    for (auto i : idx) CHECK(i < 100);
    const auto batch = buffer.sample(32, rng);
    std::set<double> tags;
    for (std::size_t k = 0; k < 32; ++k) tags.insert(batch.obs[0][k * batch.obs_dim]);
    CHECK(tags.size() == 32);
  }
  SUBCASE("fixed seed gives the same sample") {
    Rng a(77), b(77);
    CHECK(buffer.sample_indices(32, a) == buffer.sample_indices(32, b));
    const auto x = buffer.sample(8, a), y = buffer.sample(8, b);
    CHECK(x.obs == y.obs);
    CHECK(x.mask == y.mask);
  }
  SUBCASE("too few episodes") {
    ReplayBuffer small;
    small.push(make_episode(2, 0));
    Rng rng(1);
    CHECK_FALSE(small.can_sample(2));
    CHECK_THROWS(small.sample(2, rng));
    CHECK_FALSE(small.can_sample(0));
  }
}

TEST_CASE("sampling is uniform") {
  // Chi-square over 10^4 single draws from 10 episodes; 27.877 is the
  // p = 0.001 critical value with 9 degrees of freedom.
  ReplayBuffer buffer(10);
  for (std::size_t i = 0; i < 10; ++i) buffer.push(make_episode(1, static_cast<double>(i)));
  Rng rng(2024);
  std::vector<double> counts(10, 0.0);
  const int draws = 10000;
  for (int d = 0; d < draws; ++d) counts[buffer.sample_indices(1, rng)[0]] += 1.0;
  double chi2 = 0;
  for (double c : counts) chi2 += (c - draws / 10.0) * (c - draws / 10.0) / (draws / 10.0);
  CHECK(chi2 < 27.877164871256575);

  // Every position is equally likely to appear in a batch of 3.
  std::vector<double> in_batch(10, 0.0);
  for (int d = 0; d < draws; ++d) {
    for (auto i : buffer.sample_indices(3, rng)) in_batch[i] += 1.0;
  }
  chi2 = 0;
  for (double c : in_batch) chi2 += (c - 3000.0) * (c - 3000.0) / 3000.0;
  CHECK(chi2 < 27.877164871256575);
}
