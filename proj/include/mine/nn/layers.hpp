#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mine/core/ops.hpp"
#include "mine/core/rng.hpp"
#include "mine/core/tensor.hpp"

// Building blocks shared by the dual encoder and the MINE model.
namespace mine::nn {

using ParamList = std::vector<Parameter>;

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct LayerNorm {
  Tensor gain;
  Tensor bias;
  double eps = 1e-5;

  LayerNorm() = default;
  explicit LayerNorm(std::size_t dim);

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Multi-head scaled dot-product attention. Queries come from x, keys and
// values from context (x itself for self-attention).
struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t dim, std::size_t heads, Rng& rng);

  // mask, when given, is added to every head's [queries x keys] scores.
  Tensor operator()(const Tensor& x, const Tensor& context,
                    const Array* mask = nullptr) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

struct FeedForward {
  Linear up, down;

  FeedForward() = default;
  FeedForward(std::size_t dim, std::size_t hidden, Rng& rng);

  Tensor operator()(const Tensor& x) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Pre-norm transformer block: x + attn(ln(x)), then x + ffn(ln(x)).
struct EncoderBlock {
  LayerNorm ln_attn, ln_ffn;
  MultiHeadAttention attn;
  FeedForward ffn;

  EncoderBlock() = default;
  EncoderBlock(std::size_t dim, std::size_t heads, std::size_t hidden, Rng& rng);

  Tensor operator()(const Tensor& x, const Array* mask = nullptr) const;
  void collect(const std::string& prefix, ParamList& out) const;
};

// Inverted dropout; identity when p == 0 or rng is null.
Tensor dropout(const Tensor& x, double p, Rng* rng);

// Additive mask blocking attention to later positions.
Array causal_mask(std::size_t n);

// Tensor with N(0, stddev^2) entries, tracked as a parameter.
Tensor normal_param(Shape shape, double stddev, Rng& rng);

}  // namespace mine::nn
