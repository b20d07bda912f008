#include "indcomm/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstring>
#include <vector>

namespace indcomm::kernels {

namespace serial {

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < k; ++p) {
        c[i * n + j] += a[i * k + p] * b[p * n + j];
      }
    }
  }
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t p = 0; p < k; ++p) {
        c[i * n + j] += a[i * k + p] * b[j * k + p];
      }
    }
  }
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t r = 0; r < k; ++r) {
        c[i * n + j] += a[r * m + i] * b[r * n + j];
      }
    }
  }
}

}  // namespace serial

namespace {

// Register-tiled kernels. A tile of up to 4 rows x 8 columns of C is held in
// registers for the whole k loop; every element still adds its products in
// increasing k, exactly like the serial loops. `at(i, p)` reads A[i][p] in
// whatever layout the caller has; B is always [k x n] row-major here.

typedef double v4 __attribute__((vector_size(32)));

inline v4 load4(const double* p) {
  v4 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store4(double* p, v4 v) { std::memcpy(p, &v, sizeof v); }

template <int MR, class At>
inline void tile8(std::size_t i, std::size_t j, std::size_t n, std::size_t k, At at, const double* b, double* c) {
  v4 acc[MR][2];
  for (int r = 0; r < MR; ++r) {
    acc[r][0] = load4(c + (i + r) * n + j);
    acc[r][1] = load4(c + (i + r) * n + j + 4);
  }
  for (std::size_t p = 0; p < k; ++p) {
    const v4 b0 = load4(b + p * n + j);
    const v4 b1 = load4(b + p * n + j + 4);
    for (int r = 0; r < MR; ++r) {
      const double x = at(i + r, p);
      const v4 av = {x, x, x, x};
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (int r = 0; r < MR; ++r) {
    store4(c + (i + r) * n + j, acc[r][0]);
    store4(c + (i + r) * n + j + 4, acc[r][1]);
  }
}

template <int MR, class At>
inline void tile4(std::size_t i, std::size_t j, std::size_t n, std::size_t k, At at, const double* b, double* c) {
  v4 acc[MR];
  for (int r = 0; r < MR; ++r) acc[r] = load4(c + (i + r) * n + j);
  for (std::size_t p = 0; p < k; ++p) {
    const v4 b0 = load4(b + p * n + j);
    for (int r = 0; r < MR; ++r) {
      const double x = at(i + r, p);
      const v4 av = {x, x, x, x};
      acc[r] += av * b0;
    }
  }
  for (int r = 0; r < MR; ++r) store4(c + (i + r) * n + j, acc[r]);
}

template <int MR, class At>
inline void row_block(std::size_t i, std::size_t n, std::size_t k, At at, const double* b, double* c) {
  std::size_t j = 0;
  for (; j + 8 <= n; j += 8) tile8<MR>(i, j, n, k, at, b, c);
  if (j + 4 <= n) {
    tile4<MR>(i, j, n, k, at, b, c);
    j += 4;
  }
  for (; j < n; ++j) {
    for (int r = 0; r < MR; ++r) {
      double t = c[(i + r) * n + j];
      for (std::size_t p = 0; p < k; ++p) t += at(i + r, p) * b[p * n + j];
      c[(i + r) * n + j] = t;
    }
  }
}

inline bool go_parallel(std::size_t m, std::size_t n, std::size_t k) {
  return m > 4 && m * n * k >= kParallelThreshold && !omp_in_parallel();
}

template <class At>
void run_rows(std::size_t m, std::size_t n, std::size_t k, At at, const double* b, double* c) {
  const auto blocks = static_cast<std::ptrdiff_t>(m / 4);
#pragma omp parallel for schedule(static) if (go_parallel(m, n, k))
  for (std::ptrdiff_t q = 0; q < blocks; ++q) {
    row_block<4>(4 * static_cast<std::size_t>(q), n, k, at, b, c);
  }
  const std::size_t done = 4 * (m / 4);
  switch (m - done) {
    case 1: row_block<1>(done, n, k, at, b, c); break;
    case 2: row_block<2>(done, n, k, at, b, c); break;
    case 3: row_block<3>(done, n, k, at, b, c); break;
    default: break;
  }
}

}  // namespace

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  run_rows(m, n, k, [a, k](std::size_t i, std::size_t p) { return a[i * k + p]; }, b, c);
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  if (m < kNtTransposeRows) {
    // Too few rows to pay for a transpose.
    for (std::size_t i = 0; i < m; ++i) {
      const double* ai = a + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const double* bj = b + j * k;
        double t = c[i * n + j];
        for (std::size_t p = 0; p < k; ++p) t += ai[p] * bj[p];
        c[i * n + j] = t;
      }
    }
    return;
  }
  // B^T once, then the tiled kernel.
  thread_local std::vector<double> bt;
  bt.resize(k * n);
  constexpr std::size_t blk = 16;
  for (std::size_t j0 = 0; j0 < n; j0 += blk) {
    for (std::size_t p0 = 0; p0 < k; p0 += blk) {
      const std::size_t j1 = std::min(n, j0 + blk), p1 = std::min(k, p0 + blk);
      for (std::size_t j = j0; j < j1; ++j) {
        for (std::size_t p = p0; p < p1; ++p) bt[p * n + j] = b[j * k + p];
      }
    }
  }
  run_rows(m, n, k, [a, k](std::size_t i, std::size_t p) { return a[i * k + p]; }, bt.data(), c);
}

void gemm_tn(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b,
             double* c) {
  run_rows(m, n, k, [a, m](std::size_t i, std::size_t r) { return a[r * m + i]; }, b, c);
}

}  // namespace indcomm::kernels
