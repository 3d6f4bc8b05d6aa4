#include "mine/nn/layers.hpp"

#include <cmath>
#include <limits>

#include "mine/core/error.hpp"

namespace mine::nn {

Tensor normal_param(Shape shape, double stddev, Rng& rng) {
  Array a(std::move(shape));
  for (double& v : a.data()) v = rng.normal(0.0, stddev);
  return Tensor::parameter(std::move(a));
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng)
    : weight(normal_param({in, out}, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
      bias(Tensor::parameter(Array({out}, 0.0))) {}

Tensor Linear::operator()(const Tensor& x) const {
  return add_bias(matmul(x, weight), bias);
}

void Linear::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".weight", weight});
  out.push_back({prefix + ".bias", bias});
}

LayerNorm::LayerNorm(std::size_t dim)
    : gain(Tensor::parameter(Array({dim}, 1.0))),
      bias(Tensor::parameter(Array({dim}, 0.0))) {}

Tensor LayerNorm::operator()(const Tensor& x) const {
  return layer_norm(x, gain, bias, eps);
}

void LayerNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gain", gain});
  out.push_back({prefix + ".bias", bias});
}

MultiHeadAttention::MultiHeadAttention(std::size_t dim, std::size_t heads_,
                                       Rng& rng)
    : query(dim, dim, rng),
      key(dim, dim, rng),
      value(dim, dim, rng),
      output(dim, dim, rng),
      heads(heads_) {
  if (heads == 0 || dim % heads != 0) {
    throw ContractError("attention: dim " + std::to_string(dim) +
                        " not divisible by " + std::to_string(heads) + " heads");
  }
}

Tensor MultiHeadAttention::operator()(const Tensor& x, const Tensor& context,
                                      const Array* mask) const {
  const Tensor q = query(x);
  const Tensor k = key(context);
  const Tensor v = value(context);
  const std::size_t dim = q.cols();
  const std::size_t dh = dim / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> per_head;
  per_head.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = heads == 1 ? q : slice_cols(q, h * dh, (h + 1) * dh);
    const Tensor kh = heads == 1 ? k : slice_cols(k, h * dh, (h + 1) * dh);
    const Tensor vh = heads == 1 ? v : slice_cols(v, h * dh, (h + 1) * dh);
    Tensor scores = scale(matmul_nt(qh, kh), inv_sqrt);
    if (mask) scores = add_const(scores, *mask);
    per_head.push_back(matmul(softmax(scores, 1), vh));
  }
  return output(heads == 1 ? per_head[0] : concat_cols(per_head));
}

void MultiHeadAttention::collect(const std::string& prefix, ParamList& out) const {
  query.collect(prefix + ".query", out);
  key.collect(prefix + ".key", out);
  value.collect(prefix + ".value", out);
  output.collect(prefix + ".output", out);
}

FeedForward::FeedForward(std::size_t dim, std::size_t hidden, Rng& rng)
    : up(dim, hidden, rng), down(hidden, dim, rng) {}

Tensor FeedForward::operator()(const Tensor& x) const { return down(gelu(up(x))); }

void FeedForward::collect(const std::string& prefix, ParamList& out) const {
  up.collect(prefix + ".up", out);
  down.collect(prefix + ".down", out);
}

EncoderBlock::EncoderBlock(std::size_t dim, std::size_t heads, std::size_t hidden, Rng& rng)
    : ln_attn(dim), ln_ffn(dim), attn(dim, heads, rng), ffn(dim, hidden, rng) {}

Tensor EncoderBlock::operator()(const Tensor& x, const Array* mask) const {
  const Tensor h = ln_attn(x);
  const Tensor y = add(x, attn(h, h, mask));
  return add(y, ffn(ln_ffn(y)));
}

void EncoderBlock::collect(const std::string& prefix, ParamList& out) const {
  ln_attn.collect(prefix + ".ln_attn", out);
  attn.collect(prefix + ".attn", out);
  ln_ffn.collect(prefix + ".ln_ffn", out);
  ffn.collect(prefix + ".ffn", out);
}

Tensor dropout(const Tensor& x, double p, Rng* rng) {
  if (p <= 0.0 || rng == nullptr) return x;
  if (p >= 1.0) throw ContractError("dropout probability must be below 1");
  Array mask(x.shape());
  for (double& m : mask.data()) m = rng->bernoulli(p) ? 0.0 : 1.0 / (1.0 - p);
  return mul(x, Tensor(std::move(mask)));
}

Array causal_mask(std::size_t n) {
  Array m({n, n}, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) m[i * n + j] = -std::numeric_limits<double>::infinity();
  return m;
}

}  // namespace mine::nn
