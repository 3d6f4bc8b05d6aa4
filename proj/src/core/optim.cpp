#include "mine/core/optim.hpp"

#include <cmath>
#include <numbers>
#include <unordered_set>

#include "mine/core/error.hpp"

namespace mine {

std::vector<Parameter> unique_storage(std::span<const Parameter> params) {
  std::vector<Parameter> out;
  std::unordered_set<const detail::Node*> seen;
  for (const auto& p : params) {
    if (seen.insert(p.tensor.id()).second) out.push_back(p);
  }
  return out;
}

AdamW::AdamW(std::vector<Parameter> params, AdamWConfig config)
    : params_(unique_storage(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.shape(), 0.0);
    v_.emplace_back(p.tensor.shape(), 0.0);
  }
}

void AdamW::step(double lr) {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad().data()) {
      if (!std::isfinite(g)) {
        throw NumericError("non-finite gradient in parameter '" + p.name + "'");
      }
    }
  }
  ++step_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor t = params_[k].tensor;
    Array& w = t.mutable_value();
    Array& m = m_[k];
    Array& v = v_[k];
    const bool has = t.has_grad();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has ? t.grad()[i] : 0.0;
      m[i] = b1 * m[i] + (1.0 - b1) * g;
      v[i] = b2 * v[i] + (1.0 - b2) * g * g;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + config_.eps) + config_.weight_decay * w[i]);
    }
  }
}

void AdamW::zero_grad() { zero_grads(params_); }

double cosine_lr(std::size_t step, std::size_t total_steps, double lr_init,
                 double lr_min) {
  if (lr_min > lr_init) throw ContractError("cosine_lr: lr_min exceeds lr_init");
  if (total_steps == 0) return lr_init;
  if (step >= total_steps) return lr_min;
  const double frac = static_cast<double>(step) / static_cast<double>(total_steps);
  return lr_min + 0.5 * (lr_init - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

}  // namespace mine
