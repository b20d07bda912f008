#include <doctest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "indcomm/envs.hpp"

using namespace indcomm;
using namespace indcomm::envs;

namespace {

constexpr std::size_t U = 0, D = 1, L = 2, R = 3, S = 4, C = 5;

PredatorPrey four_predators() {
  PredatorPreyConfig cfg;  // 7x7, N = 4, 2 prey
  PredatorPrey env(cfg, 1);
  env.reset();
  return env;
}

// Independent recount of one transition: replays predator movement from the
// pre-step state and counts captures and lone catches on the prey positions
// the predators acted against.
struct Recount {
  std::vector<Cell> predators;
  std::size_t captures = 0;
  std::size_t solo = 0;
};

Recount recount(int grid, std::vector<Cell> pred, const std::vector<Cell>& prey, const std::vector<bool>& alive,
                const std::vector<std::size_t>& actions) {
  auto occupied = [&](Cell c, std::size_t self) {
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (i != self && pred[i] == c) return true;
    }
    for (std::size_t p = 0; p < prey.size(); ++p) {
      if (alive[p] && prey[p] == c) return true;
    }
    return false;
  };
  for (std::size_t i = 0; i < pred.size(); ++i) {
    Cell t = pred[i];
    if (actions[i] == U) t.y -= 1;
    if (actions[i] == D) t.y += 1;
    if (actions[i] == L) t.x -= 1;
    if (actions[i] == R) t.x += 1;
    const bool inside = t.x >= 0 && t.y >= 0 && t.x < grid && t.y < grid;
    if (inside && !occupied(t, i)) pred[i] = t;
  }
  Recount out;
  out.predators = pred;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (actions[i] != C) continue;
    bool near = false, helped = false;
    for (std::size_t p = 0; p < prey.size(); ++p) {
      if (!alive[p] || !adjacent(pred[i], prey[p])) continue;
      near = true;
      std::size_t others = 0;
      for (std::size_t j = 0; j < pred.size(); ++j) {
        if (j != i && actions[j] == C && adjacent(pred[j], prey[p])) ++others;
      }
      helped = helped || others >= 1;
    }
    if (near && !helped) ++out.solo;
  }
  for (std::size_t p = 0; p < prey.size(); ++p) {
    if (!alive[p]) continue;
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) n += actions[i] == C && adjacent(pred[i], prey[p]);
    if (n >= 2) ++out.captures;
  }
  return out;
}

}  // namespace

TEST_CASE("predator-prey reward examples with four predators") {
  PredatorPrey env = four_predators();

  SUBCASE("step penalty only") {
    env.set_state({{0, 0}, {6, 0}, {0, 6}, {6, 6}}, {{3, 3}, {3, 4}}, {true, true});
    std::vector<std::size_t> a{S, S, S, S};
    CHECK(env.step(a).reward == doctest::Approx(-0.4).epsilon(1e-15));
  }
  SUBCASE("one capture by two catchers") {
    env.set_state({{2, 3}, {4, 3}, {0, 0}, {6, 6}}, {{3, 3}, {0, 3}}, {true, true});
    std::vector<std::size_t> a{C, C, S, S};
    auto r = env.step(a);
    CHECK(r.reward == doctest::Approx(19.6).epsilon(1e-15));
    CHECK(r.info.captures == 1);
    CHECK(r.info.solo_attempts == 0);
    CHECK_FALSE(env.prey_alive()[0]);
    CHECK_FALSE(r.done);
  }
  SUBCASE("lone catch attempt") {
    env.set_state({{2, 3}, {6, 0}, {0, 6}, {6, 6}}, {{3, 3}, {0, 0}}, {true, true});
    std::vector<std::size_t> a{C, S, S, S};
    auto r = env.step(a);
    CHECK(r.reward == doctest::Approx(-3.4).epsilon(1e-15));
    CHECK(r.info.solo_attempts == 1);
  }
  SUBCASE("two simultaneous captures end the episode") {
    env.set_state({{2, 3}, {4, 3}, {0, 1}, {0, 3}}, {{3, 3}, {0, 2}}, {true, true});
    std::vector<std::size_t> a{C, C, C, C};
    auto r = env.step(a);
    CHECK(r.reward == doctest::Approx(39.6).epsilon(1e-15));
    CHECK(r.info.captures == 2);
    CHECK(r.done);
  }
  SUBCASE("catch with nothing adjacent is free") {
    env.set_state({{0, 0}, {6, 0}, {0, 6}, {6, 6}}, {{3, 3}, {3, 4}}, {true, true});
    std::vector<std::size_t> a{C, C, S, S};
    CHECK(env.step(a).reward == doctest::Approx(-0.4).epsilon(1e-15));
  }
}

TEST_CASE("movement rules") {
  PredatorPrey env = four_predators();
  env.set_state({{0, 0}, {1, 0}, {5, 5}, {6, 6}}, {{3, 3}, {2, 0}}, {true, true});
  // Off-grid, into a predator, into a prey: all become stay. The last one moves.
  std::vector<std::size_t> a{U, R, S, L};
  env.step(a);
  CHECK(env.predators()[0] == Cell{0, 0});
  CHECK(env.predators()[1] == Cell{1, 0});
  CHECK(env.predators()[3] == Cell{5, 6});
}

TEST_CASE("reward decomposition matches an independent recount") {
  for (std::uint64_t seed : {1, 2, 3}) {
    PredatorPreyConfig cfg;
    cfg.grid = 5;  // crowded board so captures and lone catches happen
    PredatorPrey env(cfg, seed);
    Rng policy(seed + 100);
    std::size_t captures = 0, solos = 0;
    for (int episode = 0; episode < 30; ++episode) {
      env.reset();
      bool done = false;
      while (!done) {
        std::vector<std::size_t> a(cfg.n_agents);
        for (auto& x : a) x = policy.uniform() < 0.5 ? C : policy.index(kPPActions);
        const auto pred = env.predators();
        const auto prey = env.prey();
        const auto alive = env.prey_alive();
        const auto alive_before = std::count(alive.begin(), alive.end(), true);
        const auto r = env.step(a);
        done = r.done;
        const Recount rc = recount(5, pred, prey, alive, a);
        CHECK(env.predators() == rc.predators);
        CHECK(r.info.captures == rc.captures);
        CHECK(r.info.solo_attempts == rc.solo);
        const double n = 4.0;
        CHECK(r.reward == doctest::Approx(5 * n * rc.captures - 0.75 * n * rc.solo - 0.1 * n).epsilon(1e-12));
        // Conservation.
        CHECK(env.predators().size() == 4);
        const auto alive_after = std::count(env.prey_alive().begin(), env.prey_alive().end(), true);
        CHECK(alive_after == alive_before - static_cast<long>(rc.captures));
        captures += rc.captures;
        solos += rc.solo;
      }
    }
    CHECK(captures > 0);
    CHECK(solos > 0);
  }
}

TEST_CASE("predator-prey reset") {
  PredatorPrey a = four_predators();
  std::set<std::pair<int, int>> cells;
  for (auto c : a.predators()) cells.insert({c.x, c.y});
  for (auto c : a.prey()) cells.insert({c.x, c.y});
  CHECK(cells.size() == 6);

  PredatorPreyConfig cfg;
  PredatorPrey b(cfg, 42), c(cfg, 42);
  CHECK(b.reset() == c.reset());
  CHECK(b.predators() == c.predators());
  CHECK(b.prey() == c.prey());

  PredatorPreyConfig tiny;
  tiny.grid = 2;
  CHECK_THROWS_AS(PredatorPrey(tiny, 1), std::invalid_argument);
}

TEST_CASE("observation encoding") {
  CHECK(PredatorPrey::obs_dim_for(5) == 52);
  PredatorPrey env = four_predators();
  CHECK(env.spec().obs_dim == 2 + 2 * 25);
  env.set_state({{0, 0}, {1, 0}, {5, 5}, {6, 6}}, {{0, 1}, {3, 3}}, {true, true});
  const auto obs = env.observe();
  const auto& o = obs[0];
  REQUIRE(o.size() == 52);
  CHECK(o[0] == 0.0);
  CHECK(o[1] == 0.0);
  const double* pred = o.data() + 2;
  const double* prey = pred + 25;
  // Window row-major from the top-left, centre at index 12.
  CHECK(pred[0] == -1.0);       // (-2, -2) off grid
  CHECK(prey[0] == -1.0);
  CHECK(pred[12] == 1.0);       // self
  CHECK(pred[13] == 1.0);       // predator 1 to the right
  CHECK(prey[17] == 1.0);       // prey below
  CHECK(prey[18] == 0.0);
  const auto& far = obs[3];
  CHECK(far[0] == 1.0);
  CHECK(far[1] == 1.0);
  for (const auto& ob : obs) CHECK(ob.size() == env.spec().obs_dim);
}

TEST_CASE("determinism of trajectories") {
  PredatorPreyConfig cfg;
  PredatorPrey a(cfg, 9), b(cfg, 9);
  a.reset();
  b.reset();
  Rng p(5);
  for (int t = 0; t < 100; ++t) {
    std::vector<std::size_t> act(4);
    for (auto& x : act) x = p.index(kPPActions);
    const auto ra = a.step(act), rb = b.step(act);
    CHECK(ra.observations == rb.observations);
    CHECK(ra.reward == rb.reward);
    CHECK(ra.done == rb.done);
    if (ra.done) break;
  }
}

TEST_CASE("episode cap and invalid actions") {
  PredatorPreyConfig cfg;
  cfg.max_steps = 3;
  PredatorPrey env(cfg, 2);
  env.reset();
  std::vector<std::size_t> stay{S, S, S, S};
  CHECK_FALSE(env.step(stay).done);
  CHECK_FALSE(env.step(stay).done);
  CHECK(env.step(stay).done);

  std::vector<std::size_t> bad{S, S, 6, S};
  CHECK_THROWS_AS(env.step(bad), std::invalid_argument);
  std::vector<std::size_t> short_joint{S, S};
  CHECK_THROWS_AS(env.step(short_joint), std::invalid_argument);
}

TEST_CASE("signal game") {
  SignalGame g(3);
  g.reset();
  g.set_goal(1);
  std::vector<std::size_t> a{0, 1};
  auto r = g.step(a);
  CHECK(r.reward == 1.0);
  CHECK(r.done);
  g.set_goal(0);
  CHECK(g.step(a).reward == 0.0);

  g.set_goal(1);
  auto obs = g.reset();
  CHECK(obs[1] == Observation{0.0, 0.0});
  CHECK(obs[0][static_cast<std::size_t>(g.goal())] == 1.0);

  std::vector<std::size_t> bad{0, 2};
  CHECK_THROWS_AS(g.step(bad), std::invalid_argument);
  CHECK_THROWS_AS(g.set_goal(2), std::invalid_argument);
}

TEST_CASE("signal game without communication: best policy earns one half") {
  // Agent 1's observation is constant, so a deterministic joint policy is a
  // map goal -> action for agent 0 and a single action for agent 1.
  double best = 0.0;
  for (std::size_t a0_goal0 = 0; a0_goal0 < 2; ++a0_goal0) {
    for (std::size_t a0_goal1 = 0; a0_goal1 < 2; ++a0_goal1) {
      for (std::size_t a1 = 0; a1 < 2; ++a1) {
        double expected = 0.0;
        for (int goal = 0; goal < 2; ++goal) {
          SignalGame g(1);
          g.reset();
          g.set_goal(goal);
          std::vector<std::size_t> a{goal == 0 ? a0_goal0 : a0_goal1, a1};
          expected += 0.5 * g.step(a).reward;
        }
        CHECK(expected == 0.5);
        best = std::max(best, expected);
      }
    }
  }
  CHECK(best == 0.5);
}

TEST_CASE("two-state mdp transitions") {
  CHECK(TwoStateMdp::transition(0, 0).next == 1);
  CHECK(TwoStateMdp::transition(0, 1).terminal);
  CHECK(TwoStateMdp::transition(0, 1).reward == 0.5);
  CHECK(TwoStateMdp::transition(1, 0).reward == 1.0);
  CHECK(TwoStateMdp::transition(1, 1).next == 0);

  TwoStateMdp env(1, 4);
  env.reset();
  env.set_state(0);
  std::vector<std::size_t> cycle{0};
  auto r = env.step(cycle);
  CHECK(env.state() == 1);
  CHECK_FALSE(r.done);
  CHECK(r.observations[0] == Observation{0.0, 1.0});
}

TEST_CASE("environment factory") {
  auto small = make_env("pp_small", {}, 1);
  CHECK(small->spec().n_agents == 2);
  CHECK(small->spec().n_actions == 6);
  CHECK(small->spec().max_steps == 100);
  auto full = make_env("predator_prey", {}, 1);
  CHECK(full->spec().n_agents == 4);

  EnvOverrides o;
  o.max_steps = 20;
  o.view = 3;
  auto custom = make_env("pp_small", o, 1);
  CHECK(custom->spec().max_steps == 20);
  CHECK(custom->spec().obs_dim == 20);

  CHECK(make_env("signal_game", {}, 1)->spec().n_agents == 2);
  CHECK_THROWS(make_env("signal_game", o, 1));
  CHECK_THROWS(make_env("smac", {}, 1));
  CHECK(is_known_env("two_state"));
  CHECK_FALSE(is_known_env("nope"));

  auto obs = small->reset();
  std::vector<std::size_t> a{S, S};
  auto r = small->step(a);
  CHECK(obs.size() == 2);
  CHECK(r.reward == doctest::Approx(-0.2));
}
