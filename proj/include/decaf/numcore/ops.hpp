#pragma once

#include "decaf/numcore/rng.hpp"
#include "decaf/numcore/tensor.hpp"

#include <span>
#include <vector>

// Differentiable tensor operations. Binary elementwise ops accept operands of
// identical shape, or a right operand whose shape is a suffix of the left
// operand's shape (broadcast over the leading axes).

namespace decaf::nc {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor add_scalar(const Tensor& a, double s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

/// [..., K] x [K, N] -> [..., N]
Tensor matmul(const Tensor& a, const Tensor& b);
/// x W + b with W [K, N] and b [N].
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor abs(const Tensor& a);

/// Softmax along the last axis.
Tensor softmax(const Tensor& a);
/// Normalizes along the last axis, then applies gamma [C] and beta [C].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Scalar reductions over every element.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Concatenation along the last axis; leading axes must agree.
Tensor concat_last(std::span<const Tensor> parts);
/// Elements [start, stop) of `axis`.
Tensor slice(const Tensor& a, Index axis, Index start, Index stop);
Tensor reshape(const Tensor& a, Shape shape);

/// Inverted dropout: zeroes each entry with probability p and scales the
/// survivors by 1/(1-p). p = 0 returns the input unchanged.
Tensor dropout(const Tensor& a, double p, Rng& rng);

/// Per-row Pearson correlation along the last axis:
///   sum(xc * yc) / (n (std_x + eps)(std_y + eps)), std with 1/n.
/// Inputs [..., n]; output has the leading shape ([] for rank-1 inputs).
Tensor pearson_rows(const Tensor& x, const Tensor& y, double eps = 1e-8);

/// p + alpha (e - p), clamped into [min(e, p), max(e, p)] so that the
/// convex-combination bounds hold exactly in floating point.
Tensor convex_mix(const Tensor& alpha, const Tensor& e, const Tensor& p);

bool all_finite(const Tensor& t);

}  // namespace decaf::nc
