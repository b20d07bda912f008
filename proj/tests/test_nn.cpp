#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <vector>

#include "indcomm/nn.hpp"

using namespace indcomm;
using namespace indcomm::nn;

namespace {

std::vector<double> flat_values(const ParameterList& params) {
  std::vector<double> out;
  for (const auto& p : params) out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

void fill(const ParameterList& params, double value) {
  for (auto t : tensors_of(params)) {
    for (auto& v : t.mutable_values()) v = value;
  }
}

}  // namespace

TEST_CASE("initialisation is seeded and bounded") {
  Rng a(3), b(3);
  QNetwork q1({10, 64, 6}, a), q2({10, 64, 6}, b);
  CHECK(flat_values(q1.parameters()) == flat_values(q2.parameters()));

  // The GRU and head have fan-in 64.
  for (const auto& p : q1.parameters()) {
    if (p.name.rfind("encoder", 0) == 0) continue;
    for (double v : p.tensor.values()) CHECK(std::abs(v) <= 0.125);
  }
  for (const auto& p : q1.parameters()) {
    if (p.name.find("bias") != std::string::npos || p.name.find(".b_") != std::string::npos) {
      for (double v : p.tensor.values()) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("capacity variants construct") {
  for (std::size_t h : {32, 64, 128}) {
    Rng rng(1);
    QNetwork q({52, h, 6}, rng);
    CHECK(q.hidden_size() == h);
    Tape tape = Tape::inference();
    auto out = q.forward(tape, Tensor::zeros({1, 52}), q.initial_hidden(1));
    CHECK(out.q.shape() == ad::Shape{1, 6});
    CHECK(out.hidden.shape() == ad::Shape{1, h});
  }
}

TEST_CASE("parameter count formula") {
  for (auto [d, h, k] : std::vector<std::array<std::size_t, 3>>{{52, 64, 6}, {3, 32, 2}, {10, 128, 5}}) {
    Rng rng(2);
    QNetwork q({d, h, k}, rng);
    CHECK(parameter_count(q.parameters()) == (h * d + h) + 3 * (h * h + h * h + h) + (k * h + k));
  }
}

TEST_CASE("gru gate limits") {
  Rng rng(4);
  GruCell cell(3, 4, rng);
  ParameterList params;
  cell.collect("gru", params);

  SUBCASE("zero parameters and zero state stay at zero") {
    fill(params, 0.0);
    Tape tape = Tape::inference();
    Tensor h = cell.step(tape, ad::tensor({1, -2, 3}, {1, 3}), Tensor::zeros({1, 4}));
    for (double v : h.values()) CHECK(v == 0.0);
  }
  SUBCASE("closed update gate keeps the state") {
    for (auto& v : cell.b_z_.mutable_values()) v = -50.0;
    Tape tape = Tape::inference();
    Tensor h0 = ad::tensor({0.3, -0.2, 0.9, 0.0}, {1, 4});
    Tensor h = cell.step(tape, ad::tensor({1, -2, 3}, {1, 3}), h0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(h.at(i) == doctest::Approx(h0.at(i)).epsilon(1e-12));
  }
  SUBCASE("unroll equals repeated steps bit for bit") {
    Rng data(9);
    std::vector<double> xs(3 * 2 * 3);
    for (auto& v : xs) v = data.uniform(-1, 1);
    Tape tape = Tape::inference();
    Tensor x = ad::tensor(xs, {6, 3});
    auto hs = cell.unroll(tape, x, 3, Tensor::zeros({2, 4}));
    Tensor h = Tensor::zeros({2, 4});
    for (std::size_t t = 0; t < 3; ++t) {
      h = cell.step(tape, tape.slice(x, 2 * t, 2 * t + 2, 0), h);
      CHECK(std::vector<double>(h.values().begin(), h.values().end()) ==
            std::vector<double>(hs[t].values().begin(), hs[t].values().end()));
    }
  }
}

TEST_CASE("q network outputs") {
  Rng rng(5);
  QNetwork q({8, 16, 6}, rng);
  Tensor in = ad::tensor(std::vector<double>(8, 0.5), {1, 8});

  Tape t1 = Tape::inference(), t2 = Tape::inference();
  auto a = q.forward(t1, in, q.initial_hidden(1));
  auto b = q.forward(t2, in, q.initial_hidden(1));
  CHECK(a.q.shape() == ad::Shape{1, 6});
  CHECK(std::vector<double>(a.q.values().begin(), a.q.values().end()) ==
        std::vector<double>(b.q.values().begin(), b.q.values().end()));

  Tensor w = q.head().weight();
  for (auto& v : w.mutable_values()) v = 0.0;
  Tensor bias = q.head().bias();
  for (std::size_t i = 0; i < 6; ++i) bias.mutable_values()[i] = 0.1 * static_cast<double>(i);
  Tape t3 = Tape::inference();
  auto c = q.forward(t3, in, q.initial_hidden(1));
  for (std::size_t i = 0; i < 6; ++i) CHECK(c.q.at(i) == 0.1 * static_cast<double>(i));

  CHECK_THROWS_AS(q.forward(t3, Tensor::zeros({1, 7}), q.initial_hidden(1)), ad::ShapeError);
}

TEST_CASE("communication network") {
  Rng rng(6);
  CommNetwork comm({52, 64, 64}, rng);
  Tape tape = Tape::inference();
  Tensor obs = ad::tensor(std::vector<double>(52, 0.25), {1, 52});
  CHECK(comm.forward(tape, obs).shape() == ad::Shape{1, 64});
  fill(comm.parameters(), 0.0);
  const Tensor m = comm.forward(tape, obs);
  for (double v : m.values()) CHECK(v == 0.0);
}

TEST_CASE("rmsprop") {
  RmsPropOptions opt;
  SUBCASE("closed-form first step") {
    std::vector<double> p{1.0, -2.0}, v{0.0, 0.0};
    const std::vector<double> g{1.0, 1.0};
    rmsprop_update(p, g, v, opt);
    const double move = opt.lr / (std::sqrt(0.01) + opt.eps);
    CHECK(p[0] == doctest::Approx(1.0 - move).epsilon(1e-15));
    CHECK(p[1] == doctest::Approx(-2.0 - move).epsilon(1e-15));
    CHECK(v[0] == doctest::Approx(0.01).epsilon(1e-15));
  }
  SUBCASE("zero gradient leaves parameters unchanged") {
    Tensor t = ad::tensor({0.5, 0.25}, {2}, true);
    t.zero_grad();
    RmsProp r({t}, opt);
    r.step();
    CHECK(t.at(0) == 0.5);
    CHECK(t.at(1) == 0.25);
    CHECK(r.update_count(0) == 1);
  }
  SUBCASE("identical inputs give identical updates") {
    std::vector<double> p1{0.3, 0.7}, p2 = p1, v1(2), v2(2);
    const std::vector<double> g{0.2, -1.3};
    for (int i = 0; i < 3; ++i) {
      rmsprop_update(p1, g, v1, opt);
      rmsprop_update(p2, g, v2, opt);
    }
    CHECK(p1 == p2);
  }
}

TEST_CASE("target synchronisation") {
  Rng rng(8);
  QNetwork live({5, 8, 3}, rng);
  QNetwork target = live.frozen_copy();
  CommNetwork comm({5, 8, 4}, rng);
  CommNetwork comm_target = comm.frozen_copy();
  for (const auto& p : target.parameters()) CHECK_FALSE(p.tensor.requires_grad());
  for (const auto& p : target.parameters()) CHECK_FALSE(p.tensor.shares_storage(live.parameters()[0].tensor));

  // Train the live copies a little, then sync both kinds together.
  ParameterList all_live = live.parameters(), all_target = target.parameters();
  for (auto& p : comm.parameters()) all_live.push_back(p);
  for (auto& p : comm_target.parameters()) all_target.push_back(p);
  fill(all_live, 0.125);
  CHECK(flat_values(all_live) != flat_values(all_target));
  sync_target(all_live, all_target);
  CHECK(flat_values(all_live) == flat_values(all_target));

  const auto snapshot = flat_values(all_target);
  fill(all_live, -1.0);
  CHECK(flat_values(all_target) == snapshot);

  Rng other(1);
  QNetwork wrong({5, 9, 3}, other);
  CHECK_THROWS(sync_target(live.parameters(), wrong.parameters()));
}

TEST_CASE("targets collect no gradient") {
  Rng rng(10);
  QNetwork live({4, 6, 3}, rng);
  QNetwork target = live.frozen_copy();
  Tape tape;
  Tensor in = ad::tensor({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}, {2, 4});
  Tensor y = target.unroll(tape, in, 2);
  Tensor q = live.unroll(tape, in, 2);
  tape.backward(tape.sum(tape.mul(tape.sub(q, y), tape.sub(q, y))));
  for (const auto& p : target.parameters()) {
    for (double g : p.tensor.grad()) CHECK(g == 0.0);
  }
  CHECK(grad_norm(live.parameters()) == 0.0);  // q == y initially
  Tape t2;
  t2.backward(t2.sum(live.unroll(t2, in, 2)));
  CHECK(grad_norm(live.parameters()) > 0.0);
  for (const auto& p : target.parameters()) CHECK_FALSE(p.tensor.has_grad());
}

TEST_CASE("gradient clipping") {
  Tensor t = ad::tensor({1.0, 1.0}, {2}, true);
  Tape tape;
  tape.backward(tape.sum(tape.scale(t, 3.0)));
  ParameterList params{{"t", t}};
  CHECK(clip_grad_norm(params, 1.0) == doctest::Approx(std::sqrt(18.0)));
  CHECK(grad_norm(params) == doctest::Approx(1.0));
}

TEST_CASE("checkpoint round trip is exact") {
  Rng rng(11);
  QNetwork q({7, 12, 4}, rng);
  CommNetwork c({7, 5, 3}, rng);
  ParameterList params = q.parameters();
  for (auto& p : c.parameters()) params.push_back(p);
  // Values that do not survive a decimal round trip at default precision.
  params[1].tensor.mutable_values()[0] = 0.1 + 0.2;
  params[0].tensor.mutable_values()[0] = std::nextafter(1.0, 2.0);

  std::stringstream ss;
  write_parameters(ss, params);
  Rng other(99);
  QNetwork q2({7, 12, 4}, other);
  CommNetwork c2({7, 5, 3}, other);
  ParameterList params2 = q2.parameters();
  for (auto& p : c2.parameters()) params2.push_back(p);
  CHECK(flat_values(params) != flat_values(params2));
  load_parameters(ss, params2);
  CHECK(flat_values(params) == flat_values(params2));

  const auto path = std::filesystem::temp_directory_path() / "indcomm_test_nn.params";
  save_parameters(path.string(), params);
  fill(params2, 0.0);
  load_parameters(path.string(), params2);
  CHECK(flat_values(params) == flat_values(params2));
  std::filesystem::remove(path);

  std::stringstream bad("not a checkpoint");
  CHECK_THROWS(read_parameters(bad));
  std::stringstream mismatch;
  write_parameters(mismatch, c.parameters());
  CHECK_THROWS(load_parameters(mismatch, q2.parameters()));
}
