#include <doctest.h>

#include <cstring>
#include <vector>

#include "indcomm/kernels.hpp"
#include "indcomm/rng.hpp"

using namespace indcomm;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

using Gemm = void (*)(std::size_t, std::size_t, std::size_t, const double*, const double*, double*);

// Runs the tiled and the reference kernel on the same random operands and
// a random starting C, over shapes that hit every tile remainder.
void compare(Gemm fast, Gemm ref, std::size_t a_rows_are_k) {
  Rng rng(7);
  for (std::size_t m : {1, 2, 3, 4, 5, 7, 8, 9, 33, 130}) {
    for (std::size_t n : {1, 3, 4, 6, 8, 11, 64}) {
      for (std::size_t k : {1, 2, 5, 16, 67}) {
        const auto a = random_values(m * k, rng);
        const auto b = random_values(k * n, rng);
        auto c1 = random_values(m * n, rng);
        auto c2 = c1;
        fast(m, n, k, a.data(), b.data(), c1.data());
        ref(m, n, k, a.data(), b.data(), c2.data());
        INFO("m=" << m << " n=" << n << " k=" << k << " transposed-a=" << a_rows_are_k);
        CHECK(bit_equal(c1, c2));
      }
    }
  }
}

}  // namespace

TEST_CASE("gemm_nn matches the serial reference bit for bit") {
  compare(kernels::gemm_nn, kernels::serial::gemm_nn, 0);
}

TEST_CASE("gemm_nt matches the serial reference bit for bit") {
  compare(kernels::gemm_nt, kernels::serial::gemm_nt, 0);
}

TEST_CASE("gemm_tn matches the serial reference bit for bit") {
  compare(kernels::gemm_tn, kernels::serial::gemm_tn, 1);
}

TEST_CASE("large problems take the threaded path and still agree") {
  Rng rng(11);
  const std::size_t m = 257, n = 70, k = 65;
  REQUIRE(m * n * k >= kernels::kParallelThreshold);
  const auto a = random_values(m * k, rng);
  const auto b = random_values(k * n, rng);
  const auto bt = random_values(n * k, rng);
  const auto at = random_values(k * m, rng);
  std::vector<double> c1(m * n, 0.0), c2(m * n, 0.0);
  kernels::gemm_nn(m, n, k, a.data(), b.data(), c1.data());
  kernels::serial::gemm_nn(m, n, k, a.data(), b.data(), c2.data());
  CHECK(bit_equal(c1, c2));
  kernels::gemm_nt(m, n, k, a.data(), bt.data(), c1.data());
  kernels::serial::gemm_nt(m, n, k, a.data(), bt.data(), c2.data());
  CHECK(bit_equal(c1, c2));
  kernels::gemm_tn(m, n, k, at.data(), b.data(), c1.data());
  kernels::serial::gemm_tn(m, n, k, at.data(), b.data(), c2.data());
  CHECK(bit_equal(c1, c2));
}

TEST_CASE("small known product") {
  // [1 2; 3 4] * [5 6; 7 8] = [19 22; 43 50]
  const std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
  std::vector<double> c(4, 0.0);
  kernels::gemm_nn(2, 2, 2, a.data(), b.data(), c.data());
  CHECK(c == std::vector<double>{19, 22, 43, 50});
  // Accumulates rather than overwrites.
  kernels::gemm_nn(2, 2, 2, a.data(), b.data(), c.data());
  CHECK(c == std::vector<double>{38, 44, 86, 100});
}
