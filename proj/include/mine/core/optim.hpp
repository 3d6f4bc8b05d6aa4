#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mine/core/array.hpp"
#include "mine/core/tensor.hpp"

namespace mine {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

// Decoupled-weight-decay Adam. Parameters that alias the same storage are
// updated once.
class AdamW {
 public:
  AdamW(std::vector<Parameter> params, AdamWConfig config = {});

  // One update using the gradients currently held by the parameters.
  // Throws NumericError naming the parameter when a gradient is not finite.
  void step(double lr);
  void zero_grad();

  std::size_t steps() const { return step_; }
  const AdamWConfig& config() const { return config_; }
  const std::vector<Parameter>& params() const { return params_; }
  const Array& first_moment(std::size_t i) const { return m_[i]; }
  const Array& second_moment(std::size_t i) const { return v_[i]; }

 private:
  std::vector<Parameter> params_;  // deduplicated by storage
  AdamWConfig config_;
  std::vector<Array> m_;
  std::vector<Array> v_;
  std::size_t step_ = 0;
};

// lr_min + (lr_init - lr_min)(1 + cos(pi step / total)) / 2.
// Steps past total_steps stay at lr_min.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr_init,
                 double lr_min);

// Keeps the first Parameter for each distinct storage.
std::vector<Parameter> unique_storage(std::span<const Parameter> params);

}  // namespace mine
