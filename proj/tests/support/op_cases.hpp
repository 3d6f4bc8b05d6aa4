#pragma once

// Every differentiable op with an input shape recipe, shared by the gradient
// unit tests and the acceptance run.

#include <cmath>
#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "support/gradcheck.hpp"

namespace mine::testing {

struct OpCase {
  std::string name;
  std::vector<Shape> shapes;
  std::function<Tensor(const std::vector<Tensor>&)> apply;
  double input_scale = 1.0;
  bool positive_inputs = false;  // for log and divisors
};

inline void PrintTo(const OpCase& c, std::ostream* os) { *os << c.name; }

inline std::vector<OpCase> op_cases() {
  using V = const std::vector<Tensor>&;
  static const std::size_t ce_targets[] = {1, 0, 4};
  static const std::size_t nll_targets[] = {2, 2};
  static const std::size_t ids[] = {2, 0, 2, 1};
  return {
      {"matmul", {{3, 4}, {4, 2}}, [](V in) { return matmul(in[0], in[1]); }},
      {"matmul_nt", {{3, 4}, {5, 4}}, [](V in) { return matmul_nt(in[0], in[1]); }},
      {"transpose", {{3, 4}}, [](V in) { return transpose(in[0]); }},
      {"reshape", {{3, 4}}, [](V in) { return reshape(in[0], {2, 6}); }},
      {"add", {{2, 3}, {2, 3}}, [](V in) { return add(in[0], in[1]); }},
      {"sub", {{2, 3}, {2, 3}}, [](V in) { return sub(in[0], in[1]); }},
      {"mul", {{2, 3}, {2, 3}}, [](V in) { return mul(in[0], in[1]); }},
      {"add_bias", {{3, 4}, {4}}, [](V in) { return add_bias(in[0], in[1]); }},
      {"add_const", {{2, 2}},
       [](V in) { return add_const(in[0], Array({2, 2}, {0.5, -1, 2, 0})); }},
      {"scale", {{2, 3}}, [](V in) { return scale(in[0], -1.7); }},
      {"mul_scalar", {{2, 3}, {1}}, [](V in) { return mul_scalar(in[0], in[1]); }},
      {"div_scalar", {{2, 3}, {1}}, [](V in) { return div_scalar(in[0], in[1]); }, 1.0, true},
      {"exp", {{2, 3}}, [](V in) { return exp(in[0]); }},
      {"log", {{2, 3}}, [](V in) { return log(in[0]); }, 1.0, true},
      {"gelu", {{3, 5}}, [](V in) { return gelu(in[0]); }, 2.0},
      {"sum", {{2, 3}}, [](V in) { return sum(in[0]); }},
      {"mean", {{2, 3}}, [](V in) { return mean(in[0]); }},
      {"mean_rows", {{4, 3}}, [](V in) { return mean_rows(in[0]); }},
      {"softmax_axis1", {{3, 5}}, [](V in) { return softmax(in[0], 1); }, 2.0},
      {"softmax_axis0", {{3, 5}}, [](V in) { return softmax(in[0], 0); }, 2.0},
      {"log_softmax", {{3, 5}}, [](V in) { return log_softmax(in[0], 0); }, 2.0},
      {"layer_norm", {{2, 6}, {6}, {6}},
       [](V in) { return layer_norm(in[0], in[1], in[2], 1e-5); }},
      {"l2_normalize_rows", {{3, 4}}, [](V in) { return l2_normalize_rows(in[0]); }},
      {"cross_entropy", {{3, 5}}, [](V in) { return cross_entropy(in[0], ce_targets); }, 2.0},
      {"nll_sum", {{2, 4}}, [](V in) { return nll_sum(in[0], nll_targets); }, 2.0},
      {"embedding", {{3, 4}}, [](V in) { return embedding(in[0], ids); }},
      {"slice_rows", {{5, 3}}, [](V in) { return slice_rows(in[0], 1, 4); }},
      {"slice_cols", {{3, 5}}, [](V in) { return slice_cols(in[0], 2, 5); }},
      {"concat_rows", {{2, 3}, {1, 3}}, [](V in) { return concat_rows({in[0], in[1]}); }},
      {"concat_cols", {{2, 3}, {2, 2}}, [](V in) { return concat_cols({in[0], in[1]}); }},
  };
}

// Worst relative gradient error of one op on inputs drawn from `seed`.
inline double op_gradient_error(const OpCase& c, std::uint64_t seed) {
  Rng rng(1000 + seed);
  std::vector<Tensor> inputs;
  for (const Shape& s : c.shapes) {
    Array a = random_array(s, rng, c.input_scale);
    if (c.positive_inputs)
      for (double& v : a.data()) v = 0.5 + std::abs(v);
    inputs.push_back(Tensor::parameter(std::move(a)));
  }
  const Array w = random_array(c.apply(inputs).shape(), rng);
  return gradcheck([&] { return project_to_scalar(c.apply(inputs), w); }, inputs).max_rel_error;
}

}  // namespace mine::testing
