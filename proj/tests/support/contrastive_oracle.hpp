#pragma once

#include <cmath>

#include "mine/core/tensor.hpp"

namespace mine::testing {

// Symmetric contrastive loss written out term by term, no log-sum-exp.
inline double direct_symmetric_loss(const Array& l) {
  const std::size_t n = l.rows();
  double li = 0.0, lt = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row += std::exp(l.at(i, j));
      col += std::exp(l.at(j, i));
    }
    li += -std::log(std::exp(l.at(i, i)) / row);
    lt += -std::log(std::exp(l.at(i, i)) / col);
  }
  return 0.5 * (li / n + lt / n);
}

}  // namespace mine::testing
