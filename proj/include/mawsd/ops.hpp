#ifndef MAWSD_OPS_HPP
#define MAWSD_OPS_HPP

#include "mawsd/tensor.hpp"

#include <random>
#include <span>
#include <vector>

namespace mawsd {

// Elementwise arithmetic. Shapes broadcast NumPy-style with trailing-axis
// alignment; a size-1 axis expands, anything else must match exactly.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

/// a * x + b, elementwise with constant a and b.
Tensor affine(const Tensor& x, double a, double b);
inline Tensor scale(const Tensor& x, double c) { return affine(x, c, 0.0); }
inline Tensor one_minus(const Tensor& x) { return affine(x, -1.0, 1.0); }

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);

/// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
/// Batched product: [B x m x k] . [B x k x n] -> [B x m x n]
Tensor bmm(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, int axis = -1);
/// Softmax restricted to entries whose `mask` value is non-zero; masked
/// entries come out as exactly zero. `mask` is a constant of x's shape.
Tensor masked_softmax(const Tensor& x, const Tensor& mask, int axis = -1);
Tensor log_softmax(const Tensor& x, int axis = -1);

/// Sum of all entries, as a scalar.
Tensor sum(const Tensor& x);
/// Sum along an axis; the axis is removed.
Tensor sum_axis(const Tensor& x, int axis);
/// Max along an axis (axis removed). Gradient flows to the selected entry;
/// ties go to the lowest index.
Tensor max_axis(const Tensor& x, int axis);

Tensor concat(std::span<const Tensor> parts, int axis);
Tensor stack(std::span<const Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, Index begin, Index end);
/// Slice of width one with the axis dropped.
Tensor select(const Tensor& x, int axis, Index index);
Tensor reshape(const Tensor& x, Shape shape);

/// Row lookup: table [V x E], indices [R x C] -> [R x C x E].
Tensor embedding(const Tensor& table, const IndexGrid& indices);
/// Row lookup: table [V x E], indices (N) -> [N x E].
Tensor embedding(const Tensor& table, std::span<const int> indices);

/// Picks x[..., idx] for every leading position; the last axis is removed.
Tensor gather_last(const Tensor& x, const IndexGrid& indices);

/// Inverted dropout. Identity when rate == 0.
Tensor dropout(const Tensor& x, double rate, std::mt19937_64& rng);

} // namespace mawsd

#endif // MAWSD_OPS_HPP
