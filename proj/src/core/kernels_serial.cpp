#include <vector>

#include "kernel_rows.hpp"
#include "mine/core/kernels.hpp"

namespace mine::kernels::serial {

void gemm(const GemmArgs& g, const double* a, const double* b, double* c) {
  std::vector<double> scratch;
  const double* bn = detail::normalized_b(g, b, scratch);
  for (std::size_t blk = 0; blk < detail::gemm_blocks(g); ++blk) detail::gemm_block(g, blk, a, bn, c);
}

void softmax_rows(std::size_t rows, std::size_t cols, const double* x,
                  double* y) {
  for (std::size_t r = 0; r < rows; ++r)
    detail::softmax_row(cols, x + r * cols, y + r * cols);
}

void layer_norm_rows(std::size_t rows, std::size_t cols, const double* x,
                     const double* gain, const double* bias, double eps,
                     LayerNormOut out) {
  for (std::size_t r = 0; r < rows; ++r)
    detail::layer_norm_row(r, cols, x, gain, bias, eps, out);
}

}  // namespace mine::kernels::serial
