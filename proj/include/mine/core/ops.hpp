#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mine/core/tensor.hpp"

// Differentiable operations. Matrices are rank-2 row-major; the only
// broadcast is add_bias (a vector over the trailing axis).
namespace mine {

Tensor matmul(const Tensor& a, const Tensor& b);
// a * b^T, the attention score product.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_bias(const Tensor& x, const Tensor& bias);
// Adds a constant (untracked) array, e.g. an attention mask.
Tensor add_const(const Tensor& x, const Array& c);
Tensor scale(const Tensor& x, double factor);
// x * s and x / s where s is a one-element tensor.
Tensor mul_scalar(const Tensor& x, const Tensor& s);
Tensor div_scalar(const Tensor& x, const Tensor& s);

Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Tensor gelu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// Column means of a matrix: [n x d] -> [1 x d].
Tensor mean_rows(const Tensor& x);

// Max-subtracted softmax along any axis.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);
// Row-wise x / ||x||; a zero row is a ContractError.
Tensor l2_normalize_rows(const Tensor& x);

// Mean over rows of -log softmax(logits)[target].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets);
// Same, summed instead of averaged.
Tensor nll_sum(const Tensor& logits, std::span<const std::size_t> targets);

// Gathers rows of an embedding table.
Tensor embedding(const Tensor& table, std::span<const std::size_t> ids);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);

}  // namespace mine
