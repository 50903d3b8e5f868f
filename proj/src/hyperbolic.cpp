#include "symploc/hyperbolic.hpp"

#include <cmath>
#include <numeric>

namespace symploc::hyperbolic {

using namespace symploc::ad;

namespace {

Tensor dot_rows(const Tensor& x, const Tensor& y) { return sum(mul(x, y), -1, true); }

void require_rows(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected [R, D] rows, got " + shape_string(t.shape()));
}

Tensor clamp_atanh_arg(const Tensor& t) { return clamp(t, -1.0 + kAtanhMargin, 1.0 - kAtanhMargin); }

}  // namespace

Tensor BallParams::curvature() const { return shift(softplus(c_raw), eps); }

Tensor BallParams::gate() const { return sigmoid(beta_raw); }

Tensor project_to_manifold(const Tensor& v, const Tensor& zeta) {
    require_rows(v, "project_to_manifold");
    return mul(normalize(v, -1, 1e-12), tanh(zeta));
}

Tensor clamp_to_ball(const Tensor& x, const Tensor& c) {
    require_rows(x, "clamp_to_ball");
    Tensor radius = scale(div(Tensor::scalar(1.0), sqrt(c)), 1.0 - kBallMargin);
    Tensor n = norm(x, -1, true);
    return mul(x, div(radius, maximum(n, radius)));
}

namespace {

Tensor gyro_combine(const Tensor& x, const Tensor& y, const Tensor& c, double cross_sign, double y_sign) {
    // ((1 + s c<x,y> + c|y|^2) x + t (1 - c|x|^2) y) / (1 + s c<x,y> + c^2 |x|^2 |y|^2)
    Tensor xy = dot_rows(x, y);
    Tensor x2 = dot_rows(x, x);
    Tensor y2 = dot_rows(y, y);
    Tensor cxy = scale(mul(c, xy), cross_sign);
    Tensor coef_x = shift(add(cxy, mul(c, y2)), 1.0);
    Tensor coef_y = scale(shift(neg(mul(c, x2)), 1.0), y_sign);
    Tensor den = shift(add(cxy, mul(mul(c, c), mul(x2, y2))), 1.0);
    for (double d : den.data()) {
        if (std::abs(d) < 1e-12) throw DomainError("mobius: vanishing denominator");
    }
    return clamp_to_ball(div(add(mul(coef_x, x), mul(coef_y, y)), den), c);
}

}  // namespace

Tensor mobius_add(const Tensor& x, const Tensor& y, const Tensor& c) {
    require_rows(x, "mobius_add");
    return gyro_combine(x, y, c, 2.0, 1.0);
}

Tensor mobius_sub(const Tensor& x, const Tensor& y, const Tensor& c, GeometryMode mode) {
    require_rows(x, "mobius_sub");
    double cross = mode == GeometryMode::standard ? -2.0 : 2.0;
    return gyro_combine(x, y, c, cross, -1.0);
}

Tensor exp_map(const Tensor& x, const Tensor& v, const Tensor& c, GeometryMode mode) {
    require_rows(x, "exp_map");
    Tensor sqrt_c = sqrt(c);
    Tensor vn = norm(v, -1, true);
    Tensor dir = normalize(v, -1, 1e-12);
    if (mode == GeometryMode::standard) {
        // x ⊕ tanh(sqrt(c) λ_x |v| / 2) v / (sqrt(c) |v|), λ_x = 2 / (1 - c|x|^2)
        Tensor lambda = div(Tensor::scalar(2.0), shift(neg(mul(c, dot_rows(x, x))), 1.0));
        Tensor u = div(mul(tanh(scale(mul(mul(sqrt_c, lambda), vn), 0.5)), dir), sqrt_c);
        return mobius_add(x, u, c);
    }
    // cosh(sqrt(c)|v|) x + sinh(sqrt(c)|v|) v / (sqrt(c)|v|)
    Tensor s = mul(sqrt_c, vn);
    Tensor y = add(mul(cosh(s), x), div(mul(sinh(s), dir), sqrt_c));
    return clamp_to_ball(y, c);
}

Tensor log_map(const Tensor& x, const Tensor& y, const Tensor& c, GeometryMode mode) {
    require_rows(x, "log_map");
    Tensor sqrt_c = sqrt(c);
    if (mode == GeometryMode::standard) {
        // (2 / (sqrt(c) λ_x)) atanh(sqrt(c)|-x ⊕ y|) (-x ⊕ y) / |-x ⊕ y|
        Tensor u = mobius_add(neg(x), y, c);
        Tensor one_minus = shift(neg(mul(c, dot_rows(x, x))), 1.0);
        Tensor len = atanh(clamp_atanh_arg(mul(sqrt_c, norm(u, -1, true))));
        return div(mul(mul(len, one_minus), normalize(u, -1, 1e-12)), sqrt_c);
    }
    // (2 / sqrt(c)) atanh(sqrt(c)|y ⊖ x|) (y ⊖ x) / |y ⊖ x|
    Tensor u = mobius_sub(y, x, c, GeometryMode::paper_literal);
    Tensor len = atanh(clamp_atanh_arg(mul(sqrt_c, norm(u, -1, true))));
    return div(scale(mul(len, normalize(u, -1, 1e-12)), 2.0), sqrt_c);
}

AttentionResult riemannian_self_attention(const Tensor& features, const BallParams& params,
                                          const AttentionWeights& weights, GeometryMode mode) {
    require_rows(features, "riemannian_self_attention");
    std::size_t n = features.dim(0);
    std::size_t d = features.dim(1);
    if (n == 0) throw ShapeError("riemannian_self_attention: empty instance set");
    Tensor c = params.curvature();

    Tensor on_ball = project_to_manifold(features, params.zeta);
    auto to_ball = [&](const Tensor& w) {
        return clamp_to_ball(project_to_manifold(matmul(on_ball, w), params.zeta), c);
    };
    Tensor q = to_ball(weights.w_q);
    Tensor k = to_ball(weights.w_k);
    Tensor v = to_ball(weights.w_v);

    Tensor attn = softmax(scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(d))), 1);

    // Row m*n + j pairs query point m with value point j.
    std::vector<std::size_t> qi(n * n), vi(n * n);
    for (std::size_t m = 0; m < n; ++m)
        for (std::size_t j = 0; j < n; ++j) {
            qi[m * n + j] = m;
            vi[m * n + j] = j;
        }
    Tensor tangents = log_map(index_select(q, 0, qi), index_select(v, 0, vi), c, mode);
    Tensor weighted = mul(tangents, reshape(attn, {n * n, 1}));
    Tensor aggregated = sum(reshape(weighted, {n, n, d}), 1);
    Tensor manifold = exp_map(q, aggregated, c, mode);

    return AttentionResult{layer_norm(manifold), attn, manifold, v};
}

Tensor rie_forward(const Tensor& features, const BallParams& params, const AttentionWeights& weights,
                   GeometryMode mode) {
    Tensor beta = params.gate();
    Tensor enhanced = riemannian_self_attention(features, params, weights, mode).output;
    return add(mul(beta, enhanced), mul(sub(Tensor::scalar(1.0), beta), features));
}

}  // namespace symploc::hyperbolic
