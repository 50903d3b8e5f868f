#pragma once

#include "symploc/autodiff/ops.hpp"

// Poincaré-ball geometry and the Riemannian instance enhancer. Points and
// tangent vectors are stored as rows of [R, D] tensors; curvature is a
// scalar tensor so it can be learned.
namespace symploc::hyperbolic {

using ad::Tensor;

enum class GeometryMode {
    // Gyrovector exp/log/subtraction of the Poincaré ball; exp and log are
    // exact inverses.
    standard,
    // The published formulas evaluated as written, with ball clamping.
    paper_literal,
};

// Every produced point satisfies sqrt(c) * |x| <= 1 - kBallMargin.
inline constexpr double kBallMargin = 1e-5;
// atanh arguments are clamped to (-1 + kAtanhMargin, 1 - kAtanhMargin).
inline constexpr double kAtanhMargin = 1e-7;

struct BallParams {
    Tensor c_raw;     // curvature pre-activation
    Tensor zeta;      // geodesic scale
    Tensor beta_raw;  // residual gate pre-activation
    static constexpr double eps = 1e-6;

    // softplus(c_raw) + eps
    Tensor curvature() const;
    // sigmoid(beta_raw), in [0, 1]
    Tensor gate() const;
};

// (v / |v|) * tanh(zeta) per row; rows with |v| < 1e-12 map to the origin.
Tensor project_to_manifold(const Tensor& v, const Tensor& zeta);

// Radially shrinks rows with sqrt(c)|x| > 1 - kBallMargin onto that radius;
// rows already inside are returned unchanged.
Tensor clamp_to_ball(const Tensor& x, const Tensor& c);

// Standard Möbius addition x ⊕ y.
Tensor mobius_add(const Tensor& x, const Tensor& y, const Tensor& c);

// standard: x ⊕ (-y). paper_literal: the published subtraction with its
// +2c<x,y> terms. Throws DomainError when the denominator vanishes.
Tensor mobius_sub(const Tensor& x, const Tensor& y, const Tensor& c, GeometryMode mode = GeometryMode::standard);

// Exponential map at x applied to tangent rows v.
Tensor exp_map(const Tensor& x, const Tensor& v, const Tensor& c, GeometryMode mode = GeometryMode::standard);

// Logarithmic map at x of the points y. In standard mode this is the exact
// inverse of exp_map (it carries the conformal factor 2 / (1 - c|x|^2)).
Tensor log_map(const Tensor& x, const Tensor& y, const Tensor& c, GeometryMode mode = GeometryMode::standard);

struct AttentionWeights {
    Tensor w_q;  // [D, D]
    Tensor w_k;  // [D, D]
    Tensor w_v;  // [D, D]
};

struct AttentionResult {
    Tensor output;    // layer-normalized features, [N, D]
    Tensor weights;   // row-stochastic attention, [N, N]
    Tensor manifold;  // aggregated ball points before normalization, [N, D]
    Tensor values;    // projected value points on the ball, [N, D]
};

// Single-head self-attention whose values are averaged in the tangent space
// at each query point.
AttentionResult riemannian_self_attention(const Tensor& features, const BallParams& params,
                                          const AttentionWeights& weights,
                                          GeometryMode mode = GeometryMode::standard);

// beta * RSA(V) + (1 - beta) * V
Tensor rie_forward(const Tensor& features, const BallParams& params, const AttentionWeights& weights,
                   GeometryMode mode = GeometryMode::standard);

}  // namespace symploc::hyperbolic
