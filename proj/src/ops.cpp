// SPDX-License-Identifier: Apache-2.0
#include "dftr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace dftr {
namespace {

using kernels::GemmArgs;
using kernels::Trans;

// Flat source indices of each output element under numpy broadcasting.
struct Broadcast {
  Shape out;
  std::vector<std::size_t> a_index;
  std::vector<std::size_t> b_index;
};

Broadcast broadcast(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  Shape pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  for (std::size_t d = 0; d < rank; ++d) {
    if (pa[d] != pb[d] && pa[d] != 1 && pb[d] != 1)
      throw DimensionError("cannot broadcast " + to_string(a) + " with " + to_string(b));
    out[d] = std::max(pa[d], pb[d]);
  }
  // Row-major strides, zeroed on stretched axes.
  std::vector<std::size_t> sa(rank, 0), sb(rank, 0);
  std::size_t ra = 1, rb = 1;
  for (std::size_t d = rank; d-- > 0;) {
    sa[d] = pa[d] == 1 ? 0 : ra;
    sb[d] = pb[d] == 1 ? 0 : rb;
    ra *= pa[d];
    rb *= pb[d];
  }
  const std::size_t n = numel(out);
  Broadcast bc{out, std::vector<std::size_t>(n), std::vector<std::size_t>(n)};
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bc.a_index[i] = ia;
    bc.b_index[i] = ib;
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += sa[d];
      ib += sb[d];
      if (idx[d] < out[d]) break;
      ia -= sa[d] * out[d];
      ib -= sb[d] * out[d];
      idx[d] = 0;
    }
  }
  return bc;
}

const char* binary_name(BinaryKind kind) {
  switch (kind) {
    case BinaryKind::Add: return "add";
    case BinaryKind::Sub: return "sub";
    case BinaryKind::Mul: return "mul";
    case BinaryKind::Div: return "div";
  }
  return "binary";
}

double gelu_value(double x) {
  const double u = kGeluScale * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
  const double u = kGeluScale * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = kGeluScale * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

double sigmoid_value(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Shape bookkeeping shared by concat/slice: sizes of the axes before `dim`,
// after `dim`, and the extent of `dim` itself.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t axis = 1;
  std::size_t inner = 1;
};

AxisSplit axis_split(const Shape& s, std::size_t dim) {
  AxisSplit r;
  for (std::size_t d = 0; d < dim; ++d) r.outer *= s[d];
  r.axis = s[dim];
  for (std::size_t d = dim + 1; d < s.size(); ++d) r.inner *= s[d];
  return r;
}

}  // namespace

Tensor elementwise(BinaryKind kind, const Tensor& a, const Tensor& b) {
  const char* name = binary_name(kind);
  const bool same = a.shape() == b.shape();
  Broadcast bc;
  if (!same) bc = broadcast(a.shape(), b.shape());
  const Shape out_shape = same ? a.shape() : bc.out;
  const std::size_t n = numel(out_shape);
  auto ai = [&, same](std::size_t i) { return same ? i : bc.a_index[i]; };
  auto bi = [&, same](std::size_t i) { return same ? i : bc.b_index[i]; };
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = av[ai(i)], y = bv[bi(i)];
    switch (kind) {
      case BinaryKind::Add: out[i] = x + y; break;
      case BinaryKind::Sub: out[i] = x - y; break;
      case BinaryKind::Mul: out[i] = x * y; break;
      case BinaryKind::Div: out[i] = x / y; break;
    }
  }
  return make_result(out_shape, std::move(out), {a, b},
      [=](const Tensor& res) -> Tape::BackwardFn {
        return [=]() {
          const auto g = res.grad();
          const auto x = a.data();
          const auto y = b.data();
          auto ia = [&](std::size_t i) { return same ? i : bc.a_index[i]; };
          auto ib = [&](std::size_t i) { return same ? i : bc.b_index[i]; };
          if (a.requires_grad()) {
            auto ga = a.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
              switch (kind) {
                case BinaryKind::Add:
                case BinaryKind::Sub: ga[ia(i)] += g[i]; break;
                case BinaryKind::Mul: ga[ia(i)] += g[i] * y[ib(i)]; break;
                case BinaryKind::Div: ga[ia(i)] += g[i] / y[ib(i)]; break;
              }
            }
          }
          if (b.requires_grad()) {
            auto gb = b.grad_buffer();
            for (std::size_t i = 0; i < n; ++i) {
              switch (kind) {
                case BinaryKind::Add: gb[ib(i)] += g[i]; break;
                case BinaryKind::Sub: gb[ib(i)] -= g[i]; break;
                case BinaryKind::Mul: gb[ib(i)] += g[i] * x[ia(i)]; break;
                case BinaryKind::Div: {
                  const double yy = y[ib(i)];
                  gb[ib(i)] -= g[i] * x[ia(i)] / (yy * yy);
                  break;
                }
              }
            }
          }
        };
      },
      name);
}

Tensor elementwise(UnaryKind kind, const Tensor& a) {
  const auto av = a.data();
  const std::size_t n = av.size();
  std::vector<double> out(n);
  const char* name = "unary";
  switch (kind) {
    case UnaryKind::Gelu:
      name = "gelu";
      for (std::size_t i = 0; i < n; ++i) out[i] = gelu_value(av[i]);
      break;
    case UnaryKind::Sigmoid:
      name = "sigmoid";
      for (std::size_t i = 0; i < n; ++i) out[i] = sigmoid_value(av[i]);
      break;
    case UnaryKind::Log:
      name = "log";
      for (std::size_t i = 0; i < n; ++i) {
        if (!(av[i] > 0.0))
          throw DomainError("log of non-positive value " + std::to_string(av[i]) + " at index " +
                            std::to_string(i));
        out[i] = std::log(av[i]);
      }
      break;
    case UnaryKind::Exp:
      name = "exp";
      for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(av[i]);
      break;
  }
  return make_result(a.shape(), std::move(out), {a},
      [=](const Tensor& res) -> Tape::BackwardFn {
        return [=]() {
          const auto g = res.grad();
          const auto x = a.data();
          const auto y = res.data();
          auto ga = a.grad_buffer();
          for (std::size_t i = 0; i < n; ++i) {
            switch (kind) {
              case UnaryKind::Gelu: ga[i] += g[i] * gelu_grad(x[i]); break;
              case UnaryKind::Sigmoid: ga[i] += g[i] * y[i] * (1.0 - y[i]); break;
              case UnaryKind::Log: ga[i] += g[i] / x[i]; break;
              case UnaryKind::Exp: ga[i] += g[i] * y[i]; break;
            }
          }
        };
      },
      name);
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryKind::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryKind::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryKind::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(BinaryKind::Div, a, b); }
Tensor gelu(const Tensor& a) { return elementwise(UnaryKind::Gelu, a); }
Tensor sigmoid(const Tensor& a) { return elementwise(UnaryKind::Sigmoid, a); }
Tensor log(const Tensor& a) { return elementwise(UnaryKind::Log, a); }
Tensor exp(const Tensor& a) { return elementwise(UnaryKind::Exp, a); }

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a},
      [=](const Tensor& res) -> Tape::BackwardFn {
        return [=]() {
          const auto g = res.grad();
          auto ga = a.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
        };
      },
      "scale");
}

Tensor add_scalar(const Tensor& a, double offset) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v += offset;
  return make_result(a.shape(), std::move(out), {a},
      [=](const Tensor& res) -> Tape::BackwardFn {
        return [=]() {
          const auto g = res.grad();
          auto ga = a.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        };
      },
      "add_scalar");
}

Tensor square(const Tensor& a) { return mul(a, a); }

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  return make_result({1}, {s}, {a},
      [=](const Tensor& res) -> Tape::BackwardFn {
        return [=]() {
          const double g = res.grad()[0];
          for (auto& v : a.grad_buffer()) v += g;
        };
      },
      "sum");
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor bmm(const Tensor& a, const Tensor& b, Trans trans_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0))
    throw DimensionError("bmm expects [B,m,k] x [B,k,n], got " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  const bool tb = trans_b == Trans::Yes;
  const std::size_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::size_t kb = tb ? b.dim(2) : b.dim(1);
  const std::size_t n = tb ? b.dim(1) : b.dim(2);
  if (k != kb)
    throw DimensionError("bmm inner extents differ: " + to_string(a.shape()) + " x " +
                         to_string(b.shape()) + (tb ? " (b transposed)" : ""));
  std::vector<double> out(batch * m * n);
  GemmArgs args{{m, n, k}, Trans::No, trans_b, batch, false};
  kernels::parallel::gemm(args, a.data(), b.data(), out);
  return make_result({batch, m, n}, std::move(out), {a, b},
      [=](const Tensor& res) -> Tape::BackwardFn {
        return [=]() {
          const auto g = res.grad();
          if (a.requires_grad()) {
            // dA = G * op(B)ᵀ
            GemmArgs ga{{m, k, n}, Trans::No, tb ? Trans::No : Trans::Yes, batch, true};
            kernels::parallel::gemm(ga, g, b.data(), a.grad_buffer());
          }
          if (b.requires_grad()) {
            if (tb) {
              // B is [n,k]: dB = Gᵀ * A
              GemmArgs gb{{n, k, m}, Trans::Yes, Trans::No, batch, true};
              kernels::parallel::gemm(gb, g, a.data(), b.grad_buffer());
            } else {
              GemmArgs gb{{k, n, m}, Trans::Yes, Trans::No, batch, true};
              kernels::parallel::gemm(gb, a.data(), g, b.grad_buffer());
            }
          }
        };
      },
      "bmm");
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw DimensionError("matmul shape mismatch: " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  kernels::parallel::gemm({{m, n, k}}, a.data(), b.data(), out);
  return make_result({m, n}, std::move(out), {a, b},
      [=](const Tensor& res) -> Tape::BackwardFn {
        return [=]() {
          const auto g = res.grad();
          if (a.requires_grad())
            kernels::parallel::gemm({{m, k, n}, Trans::No, Trans::Yes, 1, true}, g, b.data(),
                                    a.grad_buffer());
          if (b.requires_grad())
            kernels::parallel::gemm({{k, n, m}, Trans::Yes, Trans::No, 1, true}, a.data(), g,
                                    b.grad_buffer());
        };
      },
      "matmul");
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.dim(1) != weight.dim(0))
    throw DimensionError("linear shape mismatch: input " + to_string(x.shape()) + ", weight " +
                         to_string(weight.shape()));
  const std::size_t m = x.dim(0), k = x.dim(1), n = weight.dim(1);
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != n))
    throw DimensionError("linear bias " + to_string(bias.shape()) + " does not match " +
                         std::to_string(n) + " outputs");
  std::vector<double> out(m * n);
  if (has_bias) {
    const auto bv = bias.data();
    for (std::size_t r = 0; r < m; ++r) std::copy(bv.begin(), bv.end(), out.begin() + static_cast<std::ptrdiff_t>(r * n));
  }
  kernels::parallel::gemm({{m, n, k}, Trans::No, Trans::No, 1, has_bias}, x.data(), weight.data(), out);
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result({m, n}, std::move(out), std::move(inputs),
      [=](const Tensor& res) -> Tape::BackwardFn {
        return [=]() {
          const auto g = res.grad();
          if (x.requires_grad())
            kernels::parallel::gemm({{m, k, n}, Trans::No, Trans::Yes, 1, true}, g, weight.data(),
                                    x.grad_buffer());
          if (weight.requires_grad())
            kernels::parallel::gemm({{k, n, m}, Trans::Yes, Trans::No, 1, true}, x.data(), g,
                                    weight.grad_buffer());
          if (has_bias && bias.requires_grad()) {
            auto gb = bias.grad_buffer();
            for (std::size_t r = 0; r < m; ++r)
              for (std::size_t j = 0; j < n; ++j) gb[j] += g[r * n + j];
          }
        };
      },
      "linear");
}

Tensor softmax_lastdim(const Tensor& x) {
  const std::size_t n = x.shape().back();
  const std::size_t rows = x.numel() / n;
  std::vector<double> out(x.numel());
  kernels::parallel::softmax_rows(rows, n, x.data(), out);
  return make_result(x.shape(), std::move(out), {x},
      [=](const Tensor& res) -> Tape::BackwardFn {
        return [=]() {
          kernels::parallel::softmax_rows_backward(rows, n, res.data(), res.grad(), x.grad_buffer());
        };
      },
      "softmax");
}

Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const std::size_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d)
    throw DimensionError("layernorm affine params must have " + std::to_string(d) + " entries");
  if (!(eps > 0.0)) throw DomainError("layernorm eps must be positive");
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel()), mean(rows), rstd(rows);
  kernels::parallel::layernorm_rows(rows, d, eps, x.data(), gamma.data(), beta.data(), out,
                                    {mean, rstd});
  return make_result(x.shape(), std::move(out), {x, gamma, beta},
      [=](const Tensor& res) -> Tape::BackwardFn {
        return [=]() {
          const auto g = res.grad();
          const auto xv = x.data();
          const auto gm = gamma.data();
          if (x.requires_grad()) {
            auto gx = x.grad_buffer();
            for (std::size_t r = 0; r < rows; ++r) {
              const double* xr = xv.data() + r * d;
              const double* gr = g.data() + r * d;
              double mean_dxh = 0.0, mean_dxh_xh = 0.0;
              for (std::size_t j = 0; j < d; ++j) {
                const double xh = (xr[j] - mean[r]) * rstd[r];
                const double dxh = gr[j] * gm[j];
                mean_dxh += dxh;
                mean_dxh_xh += dxh * xh;
              }
              mean_dxh /= static_cast<double>(d);
              mean_dxh_xh /= static_cast<double>(d);
              for (std::size_t j = 0; j < d; ++j) {
                const double xh = (xr[j] - mean[r]) * rstd[r];
                gx[r * d + j] += rstd[r] * (gr[j] * gm[j] - mean_dxh - xh * mean_dxh_xh);
              }
            }
          }
          if (gamma.requires_grad() || beta.requires_grad()) {
            std::vector<double> gg(d, 0.0), gbt(d, 0.0);
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < d; ++j) {
                const double xh = (xv[r * d + j] - mean[r]) * rstd[r];
                gg[j] += g[r * d + j] * xh;
                gbt[j] += g[r * d + j];
              }
            if (gamma.requires_grad()) {
              auto b = gamma.grad_buffer();
              for (std::size_t j = 0; j < d; ++j) b[j] += gg[j];
            }
            if (beta.requires_grad()) {
              auto b = beta.grad_buffer();
              for (std::size_t j = 0; j < d; ++j) b[j] += gbt[j];
            }
          }
        };
      },
      "layernorm");
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw DimensionError("cannot reshape " + to_string(x.shape()) + " to " + to_string(shape));
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_result(std::move(shape), std::move(out), {x},
      [=](const Tensor& res) -> Tape::BackwardFn {
        return [=]() {
          const auto g = res.grad();
          auto gx = x.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
        };
      },
      "reshape");
}

Tensor gather(const Tensor& x, std::vector<std::size_t> index, Shape out_shape) {
  if (numel(out_shape) != index.size())
    throw DimensionError("gather: " + std::to_string(index.size()) + " indices for output " +
                         to_string(out_shape));
  const auto xv = x.data();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= xv.size())
      throw DimensionError("gather index " + std::to_string(index[i]) + " out of range for " +
                           to_string(x.shape()));
    out[i] = xv[index[i]];
  }
  return make_result(std::move(out_shape), std::move(out), {x},
      [=, index = std::move(index)](const Tensor& res) -> Tape::BackwardFn {
        return [=]() {
          const auto g = res.grad();
          auto gx = x.grad_buffer();
          for (std::size_t i = 0; i < index.size(); ++i) gx[index[i]] += g[i];
        };
      },
      "gather");
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& in = x.shape();
  if (order.size() != in.size())
    throw DimensionError("permute order has " + std::to_string(order.size()) + " axes for " +
                         to_string(in));
  std::vector<bool> seen(in.size(), false);
  Shape out(in.size());
  for (std::size_t d = 0; d < order.size(); ++d) {
    if (order[d] >= in.size() || seen[order[d]])
      throw DimensionError("permute order is not a permutation of " + std::to_string(in.size()) +
                           " axes");
    seen[order[d]] = true;
    out[d] = in[order[d]];
  }
  std::vector<std::size_t> in_stride(in.size(), 1);
  for (std::size_t d = in.size() - 1; d-- > 0;) in_stride[d] = in_stride[d + 1] * in[d + 1];
  const std::size_t n = x.numel();
  std::vector<std::size_t> index(n);
  std::vector<std::size_t> pos(out.size(), 0);
  std::size_t src = 0;
  for (std::size_t i = 0; i < n; ++i) {
    index[i] = src;
    for (std::size_t d = out.size(); d-- > 0;) {
      const std::size_t st = in_stride[order[d]];
      if (++pos[d] < out[d]) {
        src += st;
        break;
      }
      src -= (out[d] - 1) * st;
      pos[d] = 0;
    }
  }
  return gather(x, std::move(index), out);
}

Tensor concat(std::span<const Tensor> parts, std::size_t dim) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  const Shape& first = parts[0].shape();
  if (dim >= first.size()) throw DimensionError("concat dim out of range for " + to_string(first));
  Shape out = first;
  out[dim] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == dim || s[d] == first[d];
    if (!ok)
      throw DimensionError("concat along dim " + std::to_string(dim) + ": " + to_string(s) +
                           " incompatible with " + to_string(first));
    out[dim] += s[dim];
  }
  const AxisSplit o = axis_split(out, dim);
  std::vector<double> values(numel(out));
  std::size_t offset = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    const AxisSplit ps = axis_split(p.shape(), dim);
    const auto pv = p.data();
    const std::size_t chunk = ps.axis * ps.inner;
    for (std::size_t r = 0; r < o.outer; ++r)
      std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(r * chunk), chunk,
                  values.begin() + static_cast<std::ptrdiff_t>(r * o.axis * o.inner + offset * o.inner));
    offsets.push_back(offset);
    offset += ps.axis;
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  return make_result(out, std::move(values), inputs,
      [=](const Tensor& res) -> Tape::BackwardFn {
        return [=]() {
          const auto g = res.grad();
          for (std::size_t pi = 0; pi < inputs.size(); ++pi) {
            const auto& p = inputs[pi];
            if (!p.requires_grad()) continue;
            const AxisSplit ps = axis_split(p.shape(), dim);
            const std::size_t chunk = ps.axis * ps.inner;
            auto gp = p.grad_buffer();
            for (std::size_t r = 0; r < o.outer; ++r)
              for (std::size_t j = 0; j < chunk; ++j)
                gp[r * chunk + j] += g[r * o.axis * o.inner + offsets[pi] * o.inner + j];
          }
        };
      },
      "concat");
}

Tensor slice(const Tensor& x, std::size_t dim, std::size_t start, std::size_t length) {
  const Shape& in = x.shape();
  if (dim >= in.size() || length == 0 || start + length > in[dim])
    throw DimensionError("slice [" + std::to_string(start) + ", +" + std::to_string(length) +
                         ") along dim " + std::to_string(dim) + " of " + to_string(in));
  Shape out = in;
  out[dim] = length;
  const AxisSplit s = axis_split(in, dim);
  const std::size_t chunk = length * s.inner;
  std::vector<double> values(numel(out));
  const auto xv = x.data();
  for (std::size_t r = 0; r < s.outer; ++r)
    std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(r * s.axis * s.inner + start * s.inner), chunk,
                values.begin() + static_cast<std::ptrdiff_t>(r * chunk));
  return make_result(out, std::move(values), {x},
      [=](const Tensor& res) -> Tape::BackwardFn {
        return [=]() {
          const auto g = res.grad();
          auto gx = x.grad_buffer();
          for (std::size_t r = 0; r < s.outer; ++r)
            for (std::size_t j = 0; j < chunk; ++j)
              gx[r * s.axis * s.inner + start * s.inner + j] += g[r * chunk + j];
        };
      },
      "slice");
}

std::vector<Tensor> split(const Tensor& x, std::size_t dim, const std::vector<std::size_t>& sizes) {
  if (dim >= x.rank()) throw DimensionError("split dim out of range for " + to_string(x.shape()));
  const std::size_t total = std::accumulate(sizes.begin(), sizes.end(), std::size_t{0});
  if (total != x.dim(dim))
    throw DimensionError("split sizes sum to " + std::to_string(total) + " but dim " +
                         std::to_string(dim) + " of " + to_string(x.shape()) + " has " +
                         std::to_string(x.dim(dim)));
  std::vector<Tensor> out;
  std::size_t start = 0;
  for (auto s : sizes) {
    out.push_back(slice(x, dim, start, s));
    start += s;
  }
  return out;
}

Tensor bilinear_resize(const Tensor& x, std::size_t h, std::size_t w, std::size_t out_h,
                       std::size_t out_w) {
  if (x.rank() != 2 || x.dim(0) != h * w)
    throw DimensionError("bilinear_resize expects [h*w, c] with h*w = " + std::to_string(h * w) +
                         ", got " + to_string(x.shape()));
  if (out_h == 0 || out_w == 0) throw DimensionError("bilinear_resize to an empty grid");
  const std::size_t c = x.dim(1);
  struct Tap {
    std::size_t i0, i1;
    double l0, l1;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t o = 0; o < out; ++o) {
      double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
      if (src < 0.0) src = 0.0;
      std::size_t i0 = std::min(static_cast<std::size_t>(src), in - 1);
      std::size_t i1 = std::min(i0 + 1, in - 1);
      const double l1 = src - static_cast<double>(i0);
      t[o] = {i0, i1, 1.0 - l1, l1};
    }
    return t;
  };
  const auto ty = taps(h, out_h);
  const auto tx = taps(w, out_w);
  const auto xv = x.data();
  std::vector<double> out(out_h * out_w * c);
  for (std::size_t oy = 0; oy < out_h; ++oy)
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const auto& a = ty[oy];
      const auto& b = tx[ox];
      const double* p00 = xv.data() + (a.i0 * w + b.i0) * c;
      const double* p01 = xv.data() + (a.i0 * w + b.i1) * c;
      const double* p10 = xv.data() + (a.i1 * w + b.i0) * c;
      const double* p11 = xv.data() + (a.i1 * w + b.i1) * c;
      double* o = out.data() + (oy * out_w + ox) * c;
      for (std::size_t k = 0; k < c; ++k)
        o[k] = a.l0 * (b.l0 * p00[k] + b.l1 * p01[k]) + a.l1 * (b.l0 * p10[k] + b.l1 * p11[k]);
    }
  return make_result({out_h * out_w, c}, std::move(out), {x},
      [=](const Tensor& res) -> Tape::BackwardFn {
        return [=]() {
          const auto g = res.grad();
          auto gx = x.grad_buffer();
          for (std::size_t oy = 0; oy < out_h; ++oy)
            for (std::size_t ox = 0; ox < out_w; ++ox) {
              const auto& a = ty[oy];
              const auto& b = tx[ox];
              const double* go = g.data() + (oy * out_w + ox) * c;
              for (std::size_t k = 0; k < c; ++k) {
                gx[(a.i0 * w + b.i0) * c + k] += a.l0 * b.l0 * go[k];
                gx[(a.i0 * w + b.i1) * c + k] += a.l0 * b.l1 * go[k];
                gx[(a.i1 * w + b.i0) * c + k] += a.l1 * b.l0 * go[k];
                gx[(a.i1 * w + b.i1) * c + k] += a.l1 * b.l1 * go[k];
              }
            }
        };
      },
      "bilinear_resize");
}

Tensor bce_with_logits(const Tensor& logits, const Tensor& target) {
  if (logits.shape() != target.shape())
    throw DimensionError("bce: logits " + to_string(logits.shape()) + " vs target " +
                         to_string(target.shape()));
  const auto xv = logits.data();
  const auto tv = target.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double x = xv[i];
    out[i] = std::max(x, 0.0) - x * tv[i] + std::log1p(std::exp(-std::abs(x)));
  }
  return make_result(logits.shape(), std::move(out), {logits},
      [logits, target](const Tensor& res) -> Tape::BackwardFn {
        return [logits, target, res]() {
          const auto g = res.grad();
          const auto x = logits.data();
          const auto t = target.data();
          auto gx = logits.grad_buffer();
          for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * (sigmoid_value(x[i]) - t[i]);
        };
      },
      "bce_with_logits");
}

Tensor detach(const Tensor& x) {
  return Tensor::from(x.shape(), std::vector<double>(x.data().begin(), x.data().end()));
}

}  // namespace dftr
