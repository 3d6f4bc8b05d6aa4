#include <omp.h>

#include <cstdint>
#include <vector>

#include "kernel_rows.hpp"
#include "mine/core/kernels.hpp"

namespace mine::kernels {

namespace omp {

int max_threads() { return omp_get_max_threads(); }

void gemm(const GemmArgs& g, const double* a, const double* b, double* c) {
  std::vector<double> scratch;
  const double* bn = detail::normalized_b(g, b, scratch);
  const auto blocks = static_cast<std::int64_t>(detail::gemm_blocks(g));
#pragma omp parallel for schedule(static)
  for (std::int64_t blk = 0; blk < blocks; ++blk)
    detail::gemm_block(g, static_cast<std::size_t>(blk), a, bn, c);
}

void softmax_rows(std::size_t rows, std::size_t cols, const double* x,
                  double* y) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n; ++r)
    detail::softmax_row(cols, x + r * cols, y + r * cols);
}

void layer_norm_rows(std::size_t rows, std::size_t cols, const double* x,
                     const double* gain, const double* bias, double eps,
                     LayerNormOut out) {
  const auto n = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < n; ++r)
    detail::layer_norm_row(static_cast<std::size_t>(r), cols, x, gain, bias,
                           eps, out);
}

}  // namespace omp

namespace {
// Below this many multiply-adds the fork/join costs more than it saves.
constexpr std::size_t kParallelWork = std::size_t{1} << 16;

bool go_parallel(std::size_t work) {
  return work >= kParallelWork && omp::max_threads() > 1;
}
}  // namespace

void gemm(const GemmArgs& g, const double* a, const double* b, double* c) {
  if (go_parallel(g.m * g.n * g.k))
    omp::gemm(g, a, b, c);
  else
    serial::gemm(g, a, b, c);
}

void softmax_rows(std::size_t rows, std::size_t cols, const double* x,
                  double* y) {
  if (go_parallel(rows * cols * 8))
    omp::softmax_rows(rows, cols, x, y);
  else
    serial::softmax_rows(rows, cols, x, y);
}

void layer_norm_rows(std::size_t rows, std::size_t cols, const double* x,
                     const double* gain, const double* bias, double eps,
                     LayerNormOut out) {
  if (go_parallel(rows * cols * 8))
    omp::layer_norm_rows(rows, cols, x, gain, bias, eps, out);
  else
    serial::layer_norm_rows(rows, cols, x, gain, bias, eps, out);
}

}  // namespace mine::kernels
