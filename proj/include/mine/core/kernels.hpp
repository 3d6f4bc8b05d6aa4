#pragma once

#include <cstddef>

// Dense inner loops used by the autodiff ops. Every kernel exists twice:
// a serial reference and an OpenMP row-parallel variant. Both accumulate each
// output element in the same order, so their results are bit-identical and
// the serial path doubles as the test oracle for the parallel one.
namespace mine::kernels {

struct GemmArgs {
  bool trans_a = false;
  bool trans_b = false;
  std::size_t m = 0;  // rows of op(A) and C
  std::size_t n = 0;  // cols of op(B) and C
  std::size_t k = 0;  // shared dimension
  bool accumulate = false;  // C += op(A) op(B) instead of C = ...
};

// LayerNorm forward writes the normalized values and the per-row 1/sigma,
// which the backward pass reuses.
struct LayerNormOut {
  double* y;
  double* xhat;
  double* inv_std;
};

namespace serial {
void gemm(const GemmArgs& g, const double* a, const double* b, double* c);
void softmax_rows(std::size_t rows, std::size_t cols, const double* x,
                  double* y);
void layer_norm_rows(std::size_t rows, std::size_t cols, const double* x,
                     const double* gain, const double* bias, double eps,
                     LayerNormOut out);
}  // namespace serial

namespace omp {
void gemm(const GemmArgs& g, const double* a, const double* b, double* c);
void softmax_rows(std::size_t rows, std::size_t cols, const double* x,
                  double* y);
void layer_norm_rows(std::size_t rows, std::size_t cols, const double* x,
                     const double* gain, const double* bias, double eps,
                     LayerNormOut out);
int max_threads();
}  // namespace omp

// Dispatching entry points: parallel when more than one thread is available
// and the work is large enough to amortize the fork, serial otherwise.
void gemm(const GemmArgs& g, const double* a, const double* b, double* c);
void softmax_rows(std::size_t rows, std::size_t cols, const double* x,
                  double* y);
void layer_norm_rows(std::size_t rows, std::size_t cols, const double* x,
                     const double* gain, const double* bias, double eps,
                     LayerNormOut out);

}  // namespace mine::kernels
