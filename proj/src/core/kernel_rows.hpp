#pragma once

// Per-row bodies shared by the serial and OpenMP kernels. Keeping a single
// definition is what makes the two variants bit-identical.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstring>
#include <limits>
#include <vector>

#include "mine/core/kernels.hpp"

namespace mine::kernels::detail {

// Four doubles; GCC/Clang lower it to whatever SIMD width the target has.
typedef double v4d __attribute__((vector_size(32)));

inline v4d load4(const double* p) {
  v4d v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store4(double* p, v4d v) { std::memcpy(p, &v, sizeof v); }

// Rows [i0, i0 + R) of C = op(A) * B, B already in k x n layout. Columns
// go in strips of 8 held in registers. Every element is summed over p in
// ascending order whatever the blocking, so any split of the rows gives
// bit-identical results.
template <std::size_t R>
inline void gemm_tile(const GemmArgs& g, std::size_t i0, const double* a,
                      const double* b, double* c) {
  const std::size_t n = g.n;
  const std::size_t stride = g.trans_a ? g.m : 1;  // step between A(i, p) and A(i, p + 1)
  const double* arow[R];
  for (std::size_t r = 0; r < R; ++r) arow[r] = g.trans_a ? a + i0 + r : a + (i0 + r) * g.k;
  std::size_t j0 = 0;
  for (; j0 + 8 <= n; j0 += 8) {
    v4d lo[R], hi[R];
    for (std::size_t r = 0; r < R; ++r) {
      if (g.accumulate) {
        lo[r] = load4(c + (i0 + r) * n + j0);
        hi[r] = load4(c + (i0 + r) * n + j0 + 4);
      } else {
        lo[r] = v4d{0.0, 0.0, 0.0, 0.0};
        hi[r] = lo[r];
      }
    }
    const double* bp = b + j0;
    for (std::size_t p = 0; p < g.k; ++p, bp += n) {
      const v4d b0 = load4(bp), b1 = load4(bp + 4);
      for (std::size_t r = 0; r < R; ++r) {
        const double av = arow[r][p * stride];
        lo[r] += av * b0;
        hi[r] += av * b1;
      }
    }
    for (std::size_t r = 0; r < R; ++r) {
      store4(c + (i0 + r) * n + j0, lo[r]);
      store4(c + (i0 + r) * n + j0 + 4, hi[r]);
    }
  }
  for (; j0 < n; ++j0) {
    for (std::size_t r = 0; r < R; ++r) {
      double acc = g.accumulate ? c[(i0 + r) * n + j0] : 0.0;
      for (std::size_t p = 0; p < g.k; ++p) acc += arow[r][p * stride] * b[p * n + j0];
      c[(i0 + r) * n + j0] = acc;
    }
  }
}

inline constexpr std::size_t kGemmRowBlock = 4;

// Row block `blk` (kGemmRowBlock rows, fewer at the bottom edge).
inline void gemm_block(const GemmArgs& g, std::size_t blk, const double* a,
                       const double* b, double* c) {
  const std::size_t i0 = blk * kGemmRowBlock;
  switch (std::min(kGemmRowBlock, g.m - i0)) {
    case 4: gemm_tile<4>(g, i0, a, b, c); break;
    case 3: gemm_tile<3>(g, i0, a, b, c); break;
    case 2: gemm_tile<2>(g, i0, a, b, c); break;
    default: gemm_tile<1>(g, i0, a, b, c); break;
  }
}

inline std::size_t gemm_blocks(const GemmArgs& g) {
  return (g.m + kGemmRowBlock - 1) / kGemmRowBlock;
}

inline void softmax_row(std::size_t cols, const double* x, double* y) {
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
}

inline void layer_norm_row(std::size_t r, std::size_t cols, const double* x,
                           const double* gain, const double* bias, double eps,
                           LayerNormOut out) {
  const double* xr = x + r * cols;
  double mean = 0.0;
  for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
  mean /= static_cast<double>(cols);
  double var = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double d = xr[j] - mean;
    var += d * d;
  }
  var /= static_cast<double>(cols);
  const double inv_std = 1.0 / std::sqrt(var + eps);
  out.inv_std[r] = inv_std;
  double* xh = out.xhat + r * cols;
  double* yr = out.y + r * cols;
  for (std::size_t j = 0; j < cols; ++j) {
    xh[j] = (xr[j] - mean) * inv_std;
    yr[j] = xh[j] * gain[j] + bias[j];
  }
}

// Materialize B^T into k x n layout when the caller passed B as n x k.
inline const double* normalized_b(const GemmArgs& g, const double* b,
                                  std::vector<double>& scratch) {
  if (!g.trans_b) return b;
  scratch.resize(g.k * g.n);
  for (std::size_t j = 0; j < g.n; ++j)
    for (std::size_t p = 0; p < g.k; ++p) scratch[p * g.n + j] = b[j * g.k + p];
  return scratch.data();
}

}  // namespace mine::kernels::detail
