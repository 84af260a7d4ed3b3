// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dftr/kernels.hpp"
#include "dftr/tensor.hpp"

// Differentiable tensor operations. Every op records its backward rule on the
// active tape when one of its inputs requires a gradient.
namespace dftr {

enum class BinaryKind { Add, Sub, Mul, Div };
enum class UnaryKind { Gelu, Sigmoid, Log, Exp };

/// tanh-approximation constant sqrt(2/pi) used by gelu.
inline constexpr double kGeluScale = 0.7978845608;

/// Binary ops broadcast numpy-style (trailing extents aligned, 1 stretches).
Tensor elementwise(BinaryKind kind, const Tensor& a, const Tensor& b);
Tensor elementwise(UnaryKind kind, const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
/// Throws DomainError on non-positive input.
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);

Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor square(const Tensor& a);

/// Scalar ({1}) reductions over every element.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b);
/// a[B,m,k] x op(b) where op(b) is b[B,k,n] or b[B,n,k]ᵀ.
Tensor bmm(const Tensor& a, const Tensor& b, kernels::Trans trans_b = kernels::Trans::No);
/// x[N,in] * w[in,out] + bias[out]; `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor softmax_lastdim(const Tensor& x);
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor concat(std::span<const Tensor> parts, std::size_t dim);
Tensor slice(const Tensor& x, std::size_t dim, std::size_t start, std::size_t length);
std::vector<Tensor> split(const Tensor& x, std::size_t dim, const std::vector<std::size_t>& sizes);

/// out.flat[i] = x.flat[index[i]]; the backward rule scatter-adds.
Tensor gather(const Tensor& x, std::vector<std::size_t> index, Shape out_shape);

/// Bilinear resampling of a token map x[h*w, c] to [out_h*out_w, c] with
/// half-pixel centers (align_corners = false); source coordinates below zero
/// clamp to the first row/column.
Tensor bilinear_resize(const Tensor& x, std::size_t h, std::size_t w, std::size_t out_h,
                       std::size_t out_w);

/// Per-element binary cross-entropy of logits against a constant target, in
/// the overflow-free form max(x,0) - x*t + log(1 + exp(-|x|)).
Tensor bce_with_logits(const Tensor& logits, const Tensor& target);

/// Copy that is never recorded; gradients stop here.
Tensor detach(const Tensor& x);

}  // namespace dftr
