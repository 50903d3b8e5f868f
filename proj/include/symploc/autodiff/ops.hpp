#pragma once

#include <cstddef>
#include <vector>

#include "symploc/autodiff/tape.hpp"
#include "symploc/autodiff/tensor.hpp"

// Differentiable primitives. Every op validates shapes, checks that its
// output is finite (NonFiniteError otherwise) and, when any input is bound to
// a tape, records itself with its local gradient. Axis arguments accept
// negative values counted from the last axis.
namespace symploc::ad {

// Elementwise binary ops with numpy broadcasting.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
// a^b for a >= 0; the 0^b corner contributes zero gradient.
Tensor pow(const Tensor& a, const Tensor& b);
Tensor maximum(const Tensor& a, const Tensor& b);
Tensor minimum(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& a, double s);
Tensor shift(const Tensor& a, double s);

Tensor neg(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor cosh(const Tensor& a);
Tensor sinh(const Tensor& a);
Tensor atanh(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
// Hard clamp into [lo, hi]; zero gradient outside.
Tensor clamp(const Tensor& a, double lo, double hi);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end);
Tensor index_select(const Tensor& a, int axis, const std::vector<std::size_t>& indices);

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, int axis, bool keepdim = false);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, int axis, bool keepdim = false);
Tensor max(const Tensor& a, int axis, bool keepdim = false);
Tensor norm(const Tensor& a, int axis, bool keepdim = false);

// Contiguous segments of `axis` reduced independently; `segments` holds the
// segment lengths and must sum to the axis length.
Tensor segment_max(const Tensor& a, int axis, const std::vector<std::size_t>& segments);
Tensor segment_mean(const Tensor& a, int axis, const std::vector<std::size_t>& segments);

Tensor softmax(const Tensor& a, int axis);
// Normalizes over the last axis, no affine terms.
Tensor layer_norm(const Tensor& a, double eps = 1e-5);
// Rows scaled to unit L2 norm along `axis`; rows with norm below `tiny` map to zero.
Tensor normalize(const Tensor& a, int axis, double tiny = 1e-12);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator/(const Tensor& a, double s) { return scale(a, 1.0 / s); }
inline Tensor operator+(const Tensor& a, double s) { return shift(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return shift(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return shift(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return shift(neg(a), s); }

}  // namespace symploc::ad
