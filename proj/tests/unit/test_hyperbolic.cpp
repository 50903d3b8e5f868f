#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "symploc/autodiff/gradcheck.hpp"
#include "symploc/hyperbolic.hpp"
#include "../support/test_util.hpp"

using namespace symploc::ad;
using namespace symploc::hyperbolic;
using symploc::testing::gaussian_tensor;
using symploc::testing::random_tensor;

namespace {

// Uniform direction, radius uniform in [0, max_scaled_radius / sqrt(c)).
Tensor random_ball_points(std::mt19937_64& rng, std::size_t rows, std::size_t dim, double c, double max_scaled_radius) {
    std::uniform_real_distribution<double> radius(0.0, max_scaled_radius);
    Tensor dirs = normalize(gaussian_tensor(rng, {rows, dim}), -1);
    std::vector<double> v(rows * dim);
    for (std::size_t r = 0; r < rows; ++r) {
        double rad = radius(rng) / std::sqrt(c);
        for (std::size_t j = 0; j < dim; ++j) v[r * dim + j] = dirs[r * dim + j] * rad;
    }
    return Tensor({rows, dim}, v);
}

double max_scaled_norm(const Tensor& x, double c) {
    Tensor n = norm(x, -1);
    double m = 0.0;
    for (double v : n.data()) m = std::max(m, std::sqrt(c) * v);
    return m;
}

BallParams params_with(double c, double zeta, double beta_raw) {
    // softplus^{-1}(c - eps)
    double target = c - BallParams::eps;
    return BallParams{Tensor::scalar(std::log(std::expm1(target))), Tensor::scalar(zeta), Tensor::scalar(beta_raw)};
}

}  // namespace

TEST_CASE("project_to_manifold examples") {
    Tensor v = Tensor::matrix({{3, 4}});
    CHECK(project_to_manifold(v, Tensor::scalar(0.0)).to_vector() == std::vector<double>{0, 0});
    Tensor p = project_to_manifold(v, Tensor::scalar(1.0));
    CHECK(std::abs(p[0] - 0.45695) < 1e-5);
    CHECK(std::abs(p[1] - std::tanh(1.0) * 0.8) < 1e-15);
    CHECK(std::abs(norm(p, -1).item() - std::tanh(1.0)) <= 1e-12);
    Tensor z = project_to_manifold(Tensor::matrix({{0, 0, 0}}), Tensor::scalar(1.0));
    CHECK(z.to_vector() == std::vector<double>{0, 0, 0});
}

TEST_CASE("gyro identities hold in standard mode") {
    std::mt19937_64 rng(21);
    for (double c : {0.1, 1.0, 2.0}) {
        Tensor ct = Tensor::scalar(c);
        Tensor x = random_ball_points(rng, 100, 6, c, 0.99);
        Tensor zero(Shape{100, 6}, 0.0);
        CHECK(max_abs_diff(mobius_sub(x, x, ct), zero) <= 1e-10);
        CHECK(max_abs_diff(mobius_sub(x, zero, ct), x) <= 1e-10);
        CHECK(max_abs_diff(mobius_sub(zero, x, ct), neg(x)) <= 1e-10);
    }
}

TEST_CASE("paper-literal subtraction does not annihilate x - x") {
    Tensor c = Tensor::scalar(1.0);
    Tensor x = Tensor::matrix({{0.3, -0.2}});
    Tensor zero(Shape{1, 2}, 0.0);
    CHECK(max_abs_diff(mobius_sub(x, x, c, GeometryMode::paper_literal), zero) > 1e-3);
    // x ⊖ 0 = x in both modes
    CHECK(max_abs_diff(mobius_sub(x, zero, c, GeometryMode::paper_literal), x) <= 1e-15);
}

TEST_CASE("mobius subtraction rejects a vanishing denominator") {
    // Outside the ball: (1 - <x,y>)^2 = 0 for x = (1, 0), y = (1, 0), literal sign.
    Tensor c = Tensor::scalar(1.0);
    Tensor x = Tensor::matrix({{1.0, 0.0}});
    Tensor y = Tensor::matrix({{-1.0, 0.0}});
    CHECK_THROWS_AS(mobius_sub(x, y, c, GeometryMode::paper_literal), DomainError);
}

TEST_CASE("exp and log map limiting cases") {
    Tensor c = Tensor::scalar(1.0);
    Tensor x = Tensor::matrix({{0.2, -0.4, 0.1}});
    Tensor zero(Shape{1, 3}, 0.0);
    for (auto mode : {GeometryMode::standard, GeometryMode::paper_literal}) {
        CHECK(bitwise_equal(exp_map(x, zero, c, mode), x));
    }
    CHECK(max_abs_diff(log_map(x, x, c), zero) <= 1e-12);
    // The literal subtraction leaves x ⊖ x != 0, so log_x(x) != 0 there.
    CHECK(max_abs_diff(log_map(x, x, c, GeometryMode::paper_literal), zero) > 1e-3);
    Tensor v = Tensor::matrix({{6e-4, -8e-4, 0.0}});  // |v| = 1e-3
    Tensor e = exp_map(zero, v, c);
    CHECK(max_abs_diff(e, v) / 1e-3 < 1e-3);
    // Standard log carries the conformal factor: log_0(y) ≈ y.
    Tensor l = log_map(zero, v, c);
    CHECK(max_abs_diff(l, v) / 1e-3 < 1e-3);
    // The literal formula lacks it: log_0(y) ≈ 2y.
    Tensor ll = log_map(zero, v, c, GeometryMode::paper_literal);
    CHECK(max_abs_diff(ll, scale(v, 2.0)) / 2e-3 < 1e-3);
}

TEST_CASE("exp/log round trip in standard mode") {
    std::mt19937_64 rng(5);
    for (double c : {0.1, 1.0, 2.0}) {
        Tensor ct = Tensor::scalar(c);
        Tensor x = random_ball_points(rng, 200, 5, c, 0.5);
        Tensor dirs = normalize(gaussian_tensor(rng, {200, 5}), -1);
        std::uniform_real_distribution<double> len(0.0, 0.5);
        std::vector<double> vv(200 * 5);
        for (std::size_t r = 0; r < 200; ++r) {
            double l = len(rng);
            for (std::size_t j = 0; j < 5; ++j) vv[r * 5 + j] = dirs[r * 5 + j] * l;
        }
        Tensor v({200, 5}, vv);
        CHECK(max_abs_diff(log_map(x, exp_map(x, v, ct), ct), v) <= 1e-6);
        Tensor y = random_ball_points(rng, 200, 5, c, 0.5);
        CHECK(max_abs_diff(exp_map(x, log_map(x, y, ct), ct), y) <= 1e-6);
    }
}

TEST_CASE("every produced point stays inside the ball") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> cdist(0.05, 4.0);
    double limit = 1.0 - kBallMargin + 1e-12;
    for (int trial = 0; trial < 50; ++trial) {
        double c = cdist(rng);
        Tensor ct = Tensor::scalar(c);
        Tensor x = random_ball_points(rng, 20, 4, c, 0.99999);
        Tensor y = random_ball_points(rng, 20, 4, c, 0.99999);
        Tensor v = gaussian_tensor(rng, {20, 4}, 3.0);
        for (auto mode : {GeometryMode::standard, GeometryMode::paper_literal}) {
            CHECK(max_scaled_norm(mobius_sub(x, y, ct, mode), c) <= limit);
            CHECK(max_scaled_norm(exp_map(x, v, ct, mode), c) <= limit);
        }
        CHECK(max_scaled_norm(mobius_add(x, y, ct), c) <= limit);
        CHECK(max_scaled_norm(clamp_to_ball(gaussian_tensor(rng, {20, 4}, 10.0), ct), c) <= limit);
    }
}

namespace {

AttentionWeights random_weights(std::mt19937_64& rng, std::size_t d) {
    return AttentionWeights{random_tensor(rng, {d, d}), random_tensor(rng, {d, d}), random_tensor(rng, {d, d})};
}

}  // namespace

TEST_CASE("riemannian self-attention: single instance") {
    std::mt19937_64 rng(8);
    auto w = random_weights(rng, 6);
    auto params = params_with(1.0, 1.0, 0.0);
    Tensor features = gaussian_tensor(rng, {1, 6});
    auto r = riemannian_self_attention(features, params, w);
    CHECK(r.weights.item() == 1.0);
    CHECK(max_abs_diff(r.manifold, r.values) <= 1e-10);
}

TEST_CASE("riemannian self-attention rows sum to one and are permutation-equivariant") {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        std::size_t n = 2 + trial % 6;
        auto w = random_weights(rng, 8);
        auto params = params_with(0.5 + 0.1 * trial, 0.8, 0.3);
        Tensor features = gaussian_tensor(rng, {n, 8});
        auto r = riemannian_self_attention(features, params, w);
        Tensor rows = sum(r.weights, 1);
        for (double s : rows.data()) CHECK(std::abs(s - 1.0) <= 1e-12);

        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        auto rp = riemannian_self_attention(index_select(features, 0, perm), params, w);
        CHECK(max_abs_diff(rp.output, index_select(r.output, 0, perm)) <= 1e-12);
    }
}

TEST_CASE("rie_forward gate limits") {
    std::mt19937_64 rng(10);
    auto w = random_weights(rng, 5);
    Tensor features = gaussian_tensor(rng, {4, 5});
    auto closed = params_with(1.0, 1.0, -1000.0);
    CHECK(closed.gate().item() == 0.0);
    CHECK(bitwise_equal(rie_forward(features, closed, w), features));
    auto open = params_with(1.0, 1.0, 1000.0);
    CHECK(open.gate().item() == 1.0);
    CHECK(bitwise_equal(rie_forward(features, open, w), riemannian_self_attention(features, open, w).output));
}

TEST_CASE("rie_forward gradient matches central differences") {
    for (auto mode : {GeometryMode::standard, GeometryMode::paper_literal}) {
        std::mt19937_64 rng(mode == GeometryMode::standard ? 12 : 13);
        std::vector<Tensor> p = {gaussian_tensor(rng, {4, 6}),
                                 random_tensor(rng, {6, 6}),
                                 random_tensor(rng, {6, 6}),
                                 random_tensor(rng, {6, 6}),
                                 Tensor::scalar(0.3),
                                 Tensor::scalar(0.9),
                                 Tensor::scalar(0.2)};
        // A plain mean would cancel the layer-normalized branch entirely.
        Tensor probe = random_tensor(rng, {4, 6});
        auto f = [mode, probe](const std::vector<Tensor>& q) {
            BallParams bp{q[4], q[5], q[6]};
            return mean(mul(rie_forward(q[0], bp, AttentionWeights{q[1], q[2], q[3]}, mode), probe));
        };
        auto r = finite_difference_check(f, p);
        INFO("worst param " << r.worst_param << " ad=" << r.analytic << " fd=" << r.numeric);
        CHECK(r.max_rel_error <= 1e-4);
    }
}

TEST_CASE("curvature stays positive") {
    BallParams bp{Tensor::scalar(-50.0), Tensor::scalar(1.0), Tensor::scalar(0.0)};
    CHECK(bp.curvature().item() > 0.0);
    CHECK(bp.curvature().item() >= BallParams::eps);
}
