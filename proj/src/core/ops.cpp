#include "mine/core/ops.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mine/core/error.hpp"
#include "mine/core/kernels.hpp"

namespace mine {

namespace {

using detail::Node;

// Gradient slot of input i, or nullptr when that input is not tracked.
Array* grad_of(Node& self, std::size_t i) {
  Node& in = *self.inputs[i];
  return in.requires_grad ? &in.ensure_grad() : nullptr;
}

const Array& value_of(Node& self, std::size_t i) { return self.inputs[i]->value; }

void require_matrix(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) {
    throw DimensionError(std::string(op) + " expects a matrix, got " +
                         shape_str(t.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void require_scalar(const Tensor& s, const char* op) {
  if (s.size() != 1) {
    throw DimensionError(std::string(op) + " expects a scalar, got " +
                         shape_str(s.shape()));
  }
}

void accumulate(Array& dst, const Array& src, double factor = 1.0) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += factor * src[i];
}

template <typename F>
Tensor unary(const Tensor& x, F&& forward, std::function<double(double, double)> deriv) {
  Array out(x.shape());
  const Array& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = forward(xv[i]);
  return record(std::move(out), {x}, [deriv](Node& self) {
    Array* gx = grad_of(self, 0);
    if (!gx) return;
    const Array& xv = value_of(self, 0);
    for (std::size_t i = 0; i < gx->size(); ++i) {
      (*gx)[i] += self.grad[i] * deriv(xv[i], self.value[i]);
    }
  });
}

struct AxisGeometry {
  std::size_t outer = 1;
  std::size_t len = 1;
  std::size_t inner = 1;
};

AxisGeometry axis_geometry(const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " invalid for shape " +
                         shape_str(shape));
  }
  AxisGeometry g;
  for (std::size_t i = 0; i < axis; ++i) g.outer *= shape[i];
  g.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) g.inner *= shape[i];
  return g;
}

void check_targets(const Tensor& logits, std::span<const std::size_t> targets,
                   const char* op) {
  require_matrix(logits, op);
  if (targets.size() != logits.rows()) {
    throw DimensionError(std::string(op) + ": " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(logits.rows()) + " rows");
  }
  for (std::size_t t : targets) {
    if (t >= logits.cols()) {
      throw IndexError(std::string(op) + ": target index " + std::to_string(t) +
                       " out of range for " + std::to_string(logits.cols()) +
                       " classes");
    }
  }
}

// Sum over rows of -log softmax(logits)[target]; backward scales by factor.
Tensor nll_impl(const Tensor& logits, std::span<const std::size_t> targets,
                double factor) {
  const std::size_t n = logits.rows();
  const std::size_t v = logits.cols();
  auto probs = std::make_shared<Array>(logits.shape());
  kernels::softmax_rows(n, v, logits.value().ptr(), probs->ptr());
  double total = 0.0;
  const double* x = logits.value().ptr();
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x + r * v;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < v; ++j) mx = std::max(mx, row[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < v; ++j) s += std::exp(row[j] - mx);
    total += (mx + std::log(s)) - row[targets[r]];
  }
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return record(Array::scalar(total * factor), {logits},
                [probs, tgt = std::move(tgt), factor, v](Node& self) {
                  Array* gx = grad_of(self, 0);
                  if (!gx) return;
                  const double g = self.grad[0] * factor;
                  for (std::size_t r = 0; r < tgt.size(); ++r) {
                    for (std::size_t j = 0; j < v; ++j) {
                      (*gx)[r * v + j] += g * (*probs)[r * v + j];
                    }
                    (*gx)[r * v + tgt[r]] -= g;
                  }
                });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree, " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Array out({m, n});
  kernels::gemm({.m = m, .n = n, .k = k}, a.value().ptr(), b.value().ptr(),
                out.ptr());
  return record(std::move(out), {a, b}, [m, n, k](Node& self) {
    if (Array* ga = grad_of(self, 0)) {
      kernels::gemm({.trans_b = true, .m = m, .n = k, .k = n, .accumulate = true},
                    self.grad.ptr(), value_of(self, 1).ptr(), ga->ptr());
    }
    if (Array* gb = grad_of(self, 1)) {
      kernels::gemm({.trans_a = true, .m = k, .n = n, .k = m, .accumulate = true},
                    value_of(self, 0).ptr(), self.grad.ptr(), gb->ptr());
    }
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw DimensionError("matmul_nt: inner dimensions disagree, " +
                         shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Array out({m, n});
  kernels::gemm({.trans_b = true, .m = m, .n = n, .k = k}, a.value().ptr(),
                b.value().ptr(), out.ptr());
  return record(std::move(out), {a, b}, [m, n, k](Node& self) {
    if (Array* ga = grad_of(self, 0)) {
      kernels::gemm({.m = m, .n = k, .k = n, .accumulate = true}, self.grad.ptr(),
                    value_of(self, 1).ptr(), ga->ptr());
    }
    if (Array* gb = grad_of(self, 1)) {
      kernels::gemm({.trans_a = true, .m = n, .n = k, .k = m, .accumulate = true},
                    self.grad.ptr(), value_of(self, 0).ptr(), gb->ptr());
    }
  });
}

Tensor transpose(const Tensor& x) {
  require_matrix(x, "transpose");
  const std::size_t r = x.rows(), c = x.cols();
  Array out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x.value()[i * c + j];
  return record(std::move(out), {x}, [r, c](Node& self) {
    Array* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += self.grad[j * r + i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  Array out = x.value().reshaped(std::move(shape));
  return record(std::move(out), {x}, [](Node& self) {
    if (Array* gx = grad_of(self, 0)) accumulate(*gx, self.grad);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Array out = a.value();
  accumulate(out, b.value());
  return record(std::move(out), {a, b}, [](Node& self) {
    if (Array* ga = grad_of(self, 0)) accumulate(*ga, self.grad);
    if (Array* gb = grad_of(self, 1)) accumulate(*gb, self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Array out = a.value();
  accumulate(out, b.value(), -1.0);
  return record(std::move(out), {a, b}, [](Node& self) {
    if (Array* ga = grad_of(self, 0)) accumulate(*ga, self.grad);
    if (Array* gb = grad_of(self, 1)) accumulate(*gb, self.grad, -1.0);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Array out(a.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  return record(std::move(out), {a, b}, [](Node& self) {
    const Array& av = value_of(self, 0);
    const Array& bv = value_of(self, 1);
    if (Array* ga = grad_of(self, 0))
      for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += self.grad[i] * bv[i];
    if (Array* gb = grad_of(self, 1))
      for (std::size_t i = 0; i < gb->size(); ++i) (*gb)[i] += self.grad[i] * av[i];
  });
}

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t c = x.value().cols();
  if (bias.size() != c) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) +
                         " does not match trailing axis of " + shape_str(x.shape()));
  }
  Array out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bias.value()[i % c];
  return record(std::move(out), {x, bias}, [c](Node& self) {
    if (Array* gx = grad_of(self, 0)) accumulate(*gx, self.grad);
    if (Array* gb = grad_of(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gb)[i % c] += self.grad[i];
  });
}

Tensor add_const(const Tensor& x, const Array& c) {
  if (c.shape() != x.shape()) {
    throw DimensionError("add_const: shape mismatch " + shape_str(x.shape()) +
                         " vs " + shape_str(c.shape()));
  }
  Array out = x.value();
  accumulate(out, c);
  return record(std::move(out), {x}, [](Node& self) {
    if (Array* gx = grad_of(self, 0)) accumulate(*gx, self.grad);
  });
}

Tensor scale(const Tensor& x, double factor) {
  Array out = x.value();
  for (double& v : out.data()) v *= factor;
  return record(std::move(out), {x}, [factor](Node& self) {
    if (Array* gx = grad_of(self, 0)) accumulate(*gx, self.grad, factor);
  });
}

Tensor mul_scalar(const Tensor& x, const Tensor& s) {
  require_scalar(s, "mul_scalar");
  const double sv = s.value()[0];
  Array out = x.value();
  for (double& v : out.data()) v *= sv;
  return record(std::move(out), {x, s}, [](Node& self) {
    const double sv = value_of(self, 1)[0];
    if (Array* gx = grad_of(self, 0)) accumulate(*gx, self.grad, sv);
    if (Array* gs = grad_of(self, 1)) {
      const Array& xv = value_of(self, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < xv.size(); ++i) acc += self.grad[i] * xv[i];
      (*gs)[0] += acc;
    }
  });
}

Tensor div_scalar(const Tensor& x, const Tensor& s) {
  require_scalar(s, "div_scalar");
  const double sv = s.value()[0];
  Array out = x.value();
  for (double& v : out.data()) v /= sv;
  return record(std::move(out), {x, s}, [](Node& self) {
    const double sv = value_of(self, 1)[0];
    if (Array* gx = grad_of(self, 0)) accumulate(*gx, self.grad, 1.0 / sv);
    if (Array* gs = grad_of(self, 1)) {
      // d(x/s)/ds = -x/s^2 = -out/s
      double acc = 0.0;
      for (std::size_t i = 0; i < self.value.size(); ++i)
        acc += self.grad[i] * self.value[i];
      (*gs)[0] -= acc / sv;
    }
  });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); },
               [](double, double y) { return y; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); },
               [](double xv, double) { return 1.0 / xv; });
}

Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  return unary(
      x,
      [](double v) { return 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))); },
      [](double v, double) {
        const double t = std::tanh(kC * (v + kA * v * v * v));
        return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
      });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return record(Array::scalar(s), {x}, [](Node& self) {
    Array* gx = grad_of(self, 0);
    if (!gx) return;
    for (double& g : gx->data()) g += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor mean_rows(const Tensor& x) {
  require_matrix(x, "mean_rows");
  const std::size_t r = x.rows(), c = x.cols();
  if (r == 0) throw DimensionError("mean_rows over zero rows");
  Array out({1, c});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j] += x.value()[i * c + j];
  for (double& v : out.data()) v /= static_cast<double>(r);
  return record(std::move(out), {x}, [r, c](Node& self) {
    Array* gx = grad_of(self, 0);
    if (!gx) return;
    const double inv = 1.0 / static_cast<double>(r);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += self.grad[j] * inv;
  });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisGeometry g = axis_geometry(x.shape(), axis);
  Array out(x.shape());
  if (g.inner == 1) {
    kernels::softmax_rows(g.outer, g.len, x.value().ptr(), out.ptr());
  } else {
    std::vector<double> buf(g.len), res(g.len);
    for (std::size_t o = 0; o < g.outer; ++o) {
      for (std::size_t in = 0; in < g.inner; ++in) {
        const std::size_t base = o * g.len * g.inner + in;
        for (std::size_t l = 0; l < g.len; ++l) buf[l] = x.value()[base + l * g.inner];
        kernels::serial::softmax_rows(1, g.len, buf.data(), res.data());
        for (std::size_t l = 0; l < g.len; ++l) out[base + l * g.inner] = res[l];
      }
    }
  }
  return record(std::move(out), {x}, [g](Node& self) {
    Array* gx = grad_of(self, 0);
    if (!gx) return;
    const Array& y = self.value;
    for (std::size_t o = 0; o < g.outer; ++o) {
      for (std::size_t in = 0; in < g.inner; ++in) {
        const std::size_t base = o * g.len * g.inner + in;
        double dot = 0.0;
        for (std::size_t l = 0; l < g.len; ++l) {
          const std::size_t i = base + l * g.inner;
          dot += self.grad[i] * y[i];
        }
        for (std::size_t l = 0; l < g.len; ++l) {
          const std::size_t i = base + l * g.inner;
          (*gx)[i] += y[i] * (self.grad[i] - dot);
        }
      }
    }
  });
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const AxisGeometry g = axis_geometry(x.shape(), axis);
  Array out(x.shape());
  for (std::size_t o = 0; o < g.outer; ++o) {
    for (std::size_t in = 0; in < g.inner; ++in) {
      const std::size_t base = o * g.len * g.inner + in;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t l = 0; l < g.len; ++l) mx = std::max(mx, x.value()[base + l * g.inner]);
      double s = 0.0;
      for (std::size_t l = 0; l < g.len; ++l) s += std::exp(x.value()[base + l * g.inner] - mx);
      const double lse = mx + std::log(s);
      for (std::size_t l = 0; l < g.len; ++l) {
        const std::size_t i = base + l * g.inner;
        out[i] = x.value()[i] - lse;
      }
    }
  }
  return record(std::move(out), {x}, [g](Node& self) {
    Array* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t o = 0; o < g.outer; ++o) {
      for (std::size_t in = 0; in < g.inner; ++in) {
        const std::size_t base = o * g.len * g.inner + in;
        double gs = 0.0;
        for (std::size_t l = 0; l < g.len; ++l) gs += self.grad[base + l * g.inner];
        for (std::size_t l = 0; l < g.len; ++l) {
          const std::size_t i = base + l * g.inner;
          (*gx)[i] += self.grad[i] - std::exp(self.value[i]) * gs;
        }
      }
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const std::size_t c = x.value().cols();
  if (gain.size() != c || bias.size() != c) {
    throw DimensionError("layer_norm: gain " + shape_str(gain.shape()) + " / bias " +
                         shape_str(bias.shape()) + " do not match last axis of " +
                         shape_str(x.shape()));
  }
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t r = x.value().rows();
  Array out(x.shape());
  auto xhat = std::make_shared<Array>(x.shape());
  auto inv_std = std::make_shared<Array>(Shape{r});
  kernels::layer_norm_rows(r, c, x.value().ptr(), gain.value().ptr(),
                           bias.value().ptr(), eps,
                           {out.ptr(), xhat->ptr(), inv_std->ptr()});
  return record(std::move(out), {x, gain, bias}, [xhat, inv_std, r, c](Node& self) {
    const Array& gv = value_of(self, 1);
    Array* gx = grad_of(self, 0);
    Array* gg = grad_of(self, 1);
    Array* gb = grad_of(self, 2);
    std::vector<double> dxhat(c);
    for (std::size_t i = 0; i < r; ++i) {
      const double* dy = self.grad.ptr() + i * c;
      const double* xh = xhat->ptr() + i * c;
      double mean_d = 0.0, mean_dx = 0.0;
      for (std::size_t j = 0; j < c; ++j) {
        if (gg) (*gg)[j] += dy[j] * xh[j];
        if (gb) (*gb)[j] += dy[j];
        dxhat[j] = dy[j] * gv[j];
        mean_d += dxhat[j];
        mean_dx += dxhat[j] * xh[j];
      }
      if (!gx) continue;
      mean_d /= static_cast<double>(c);
      mean_dx /= static_cast<double>(c);
      const double s = (*inv_std)[i];
      for (std::size_t j = 0; j < c; ++j)
        (*gx)[i * c + j] += s * (dxhat[j] - mean_d - xh[j] * mean_dx);
    }
  });
}

Tensor l2_normalize_rows(const Tensor& x) {
  require_matrix(x, "l2_normalize_rows");
  const std::size_t r = x.rows(), c = x.cols();
  Array out(x.shape());
  auto norms = std::make_shared<std::vector<double>>(r);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += x.value()[i * c + j] * x.value()[i * c + j];
    const double n = std::sqrt(s);
    if (n == 0.0) {
      throw ContractError("l2_normalize_rows: row " + std::to_string(i) +
                          " is the zero vector");
    }
    (*norms)[i] = n;
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.value()[i * c + j] / n;
  }
  return record(std::move(out), {x}, [norms, r, c](Node& self) {
    Array* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += self.grad[i * c + j] * self.value[i * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        (*gx)[i * c + j] +=
            (self.grad[i * c + j] - self.value[i * c + j] * dot) / (*norms)[i];
      }
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> targets) {
  check_targets(logits, targets, "cross_entropy");
  if (targets.empty()) throw ContractError("cross_entropy over zero rows");
  return nll_impl(logits, targets, 1.0 / static_cast<double>(targets.size()));
}

Tensor nll_sum(const Tensor& logits, std::span<const std::size_t> targets) {
  check_targets(logits, targets, "nll_sum");
  return nll_impl(logits, targets, 1.0);
}

Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  require_matrix(table, "embedding");
  const std::size_t v = table.rows(), d = table.cols();
  Array out({ids.size(), d});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) {
      throw IndexError("embedding: id " + std::to_string(ids[i]) +
                       " out of range for table of " + std::to_string(v) + " rows");
    }
    std::copy_n(table.value().ptr() + ids[i] * d, d, out.ptr() + i * d);
  }
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return record(std::move(out), {table}, [idv = std::move(idv), d](Node& self) {
    Array* gt = grad_of(self, 0);
    if (!gt) return;
    for (std::size_t i = 0; i < idv.size(); ++i)
      for (std::size_t j = 0; j < d; ++j) (*gt)[idv[i] * d + j] += self.grad[i * d + j];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_rows");
  if (begin > end || end > x.rows()) {
    throw IndexError("slice_rows [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") of " + shape_str(x.shape()));
  }
  const std::size_t c = x.cols();
  Array out({end - begin, c});
  std::copy_n(x.value().ptr() + begin * c, (end - begin) * c, out.ptr());
  return record(std::move(out), {x}, [begin, c](Node& self) {
    Array* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[begin * c + i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  require_matrix(x, "slice_cols");
  if (begin > end || end > x.cols()) {
    throw IndexError("slice_cols [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") of " + shape_str(x.shape()));
  }
  const std::size_t r = x.rows(), c = x.cols(), w = end - begin;
  Array out({r, w});
  for (std::size_t i = 0; i < r; ++i)
    std::copy_n(x.value().ptr() + i * c + begin, w, out.ptr() + i * w);
  return record(std::move(out), {x}, [begin, r, c, w](Node& self) {
    Array* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) (*gx)[i * c + begin + j] += self.grad[i * w + j];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows of nothing");
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    if (p.cols() != c) {
      throw DimensionError("concat_rows: column mismatch " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    total += p.rows();
  }
  Array out({total, c});
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy_n(p.value().ptr(), p.size(), out.ptr() + off);
    off += p.size();
  }
  return record(std::move(out), parts, [](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      const std::size_t n = self.inputs[k]->value.size();
      if (Array* g = grad_of(self, k))
        for (std::size_t i = 0; i < n; ++i) (*g)[i] += self.grad[off + i];
      off += n;
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols of nothing");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    if (p.rows() != r) {
      throw DimensionError("concat_cols: row mismatch " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    total += p.cols();
  }
  Array out({r, total});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(p.value().ptr() + i * w, w, out.ptr() + i * total + off);
    off += w;
  }
  return record(std::move(out), parts, [r, total](Node& self) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      const std::size_t w = self.inputs[k]->value.cols();
      if (Array* g = grad_of(self, k))
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < w; ++j) (*g)[i * w + j] += self.grad[i * total + off + j];
      off += w;
    }
  });
}

}  // namespace mine
