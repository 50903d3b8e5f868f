#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "symploc/autodiff/gradcheck.hpp"
#include "symploc/relation.hpp"
#include "../support/test_util.hpp"

using namespace symploc::ad;
using namespace symploc::relation;
using symploc::testing::gaussian_tensor;
using symploc::testing::random_tensor;

namespace {

EdgeMlp random_edge_mlp(std::mt19937_64& rng, std::size_t df, std::size_t g, std::size_t d) {
    std::size_t h = d / 4;
    return EdgeMlp{random_tensor(rng, {g, h}),          random_tensor(rng, {h}),
                   random_tensor(rng, {h, h}),          random_tensor(rng, {h}),
                   random_tensor(rng, {2 * df + h, d}), random_tensor(rng, {d}),
                   random_tensor(rng, {d, d}),          random_tensor(rng, {d})};
}

IsreWeights random_isre(std::mt19937_64& rng, std::size_t df, std::size_t g, std::size_t d) {
    return IsreWeights{random_edge_mlp(rng, df, g, d), random_tensor(rng, {d, d}), random_tensor(rng, {d / 2, d / 2}),
                       Tensor::scalar(std::log(std::expm1(0.1)))};
}

// Forward map of one phase vector; returns [q'; p'].
Eigen::VectorXd step_map(const Eigen::VectorXd& qp, const Tensor& w, double dt, SymplecticVariant variant) {
    std::size_t h = static_cast<std::size_t>(qp.size() / 2);
    std::vector<double> q(qp.data(), qp.data() + h), p(qp.data() + h, qp.data() + 2 * h);
    PhaseState s{Tensor({1, h}, q), Tensor({1, h}, p)};
    PhaseState out = symplectic_step(s, w, Tensor::scalar(dt), variant);
    Eigen::VectorXd r(2 * h);
    for (std::size_t i = 0; i < h; ++i) {
        r[static_cast<Eigen::Index>(i)] = out.q[i];
        r[static_cast<Eigen::Index>(h + i)] = out.p[i];
    }
    return r;
}

Eigen::MatrixXd numeric_jacobian(const Eigen::VectorXd& x, const Tensor& w, double dt, SymplecticVariant variant) {
    const double h = 1e-5;
    Eigen::MatrixXd j(x.size(), x.size());
    for (Eigen::Index c = 0; c < x.size(); ++c) {
        Eigen::VectorXd xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        j.col(c) = (step_map(xp, w, dt, variant) - step_map(xm, w, dt, variant)) / (2 * h);
    }
    return j;
}

}  // namespace

TEST_CASE("offset tensor example and antisymmetry") {
    Tensor c = Tensor::matrix({{0, 0, 0}, {1, 2, 3}});
    Tensor o = build_offset_tensor(c);
    CHECK(o.shape() == Shape{2, 2, 3});
    CHECK(o.at(0, 1, 0) == -1.0);
    CHECK(o.at(0, 1, 1) == -2.0);
    CHECK(o.at(0, 1, 2) == -3.0);
    CHECK(o.at(1, 0, 2) == 3.0);

    std::mt19937_64 rng(1);
    Tensor cr = gaussian_tensor(rng, {7, 3}, 10.0);
    Tensor orr = build_offset_tensor(cr);
    for (std::size_t m = 0; m < 7; ++m)
        for (std::size_t n = 0; n < 7; ++n)
            for (std::size_t k = 0; k < 3; ++k) {
                CHECK(orr.at(m, n, k) == -orr.at(n, m, k));
                if (m == n) CHECK(orr.at(m, n, k) == 0.0);
            }
}

TEST_CASE("text relation tensor concatenates description pairs") {
    Tensor t = Tensor::matrix({{1, 2}, {3, 4}});
    Tensor o = build_text_relation_tensor(t);
    CHECK(o.shape() == Shape{2, 2, 4});
    CHECK(o.at(0, 1, 0) == 1.0);
    CHECK(o.at(0, 1, 2) == 3.0);
    CHECK(o.at(1, 0, 3) == 2.0);
}

TEST_CASE("fuse_edge_features") {
    std::mt19937_64 rng(2);
    SUBCASE("zero input with bias-free MLPs gives zero edges") {
        EdgeMlp mlp = random_edge_mlp(rng, 4, 3, 8);
        mlp.geo_b1 = Tensor({2}, 0.0);
        mlp.geo_b2 = Tensor({2}, 0.0);
        mlp.fuse_b1 = Tensor({8}, 0.0);
        mlp.fuse_b2 = Tensor({8}, 0.0);
        Tensor e = fuse_edge_features(Tensor({3, 4}, 0.0), Tensor({3, 3, 3}, 0.0), mlp);
        for (double v : e.data()) CHECK(v == 0.0);
    }
    SUBCASE("shape for every N") {
        EdgeMlp mlp = random_edge_mlp(rng, 4, 3, 8);
        for (std::size_t n = 1; n <= 8; ++n) {
            Tensor e =
                fuse_edge_features(gaussian_tensor(rng, {n, 4}), build_offset_tensor(gaussian_tensor(rng, {n, 3})), mlp);
            CHECK(e.shape() == Shape{n, n, 8});
        }
    }
    SUBCASE("offset width mismatch") {
        EdgeMlp mlp = random_edge_mlp(rng, 4, 3, 8);
        CHECK_THROWS_AS(fuse_edge_features(Tensor({2, 4}, 0.0), Tensor({2, 2, 5}, 0.0), mlp), ShapeError);
    }
    SUBCASE("gradient") {
        EdgeMlp m = random_edge_mlp(rng, 4, 3, 8);
        Tensor x = gaussian_tensor(rng, {3, 4});
        Tensor off = build_offset_tensor(gaussian_tensor(rng, {3, 3}));
        Tensor probe = random_tensor(rng, {3, 3, 8});
        std::vector<Tensor> p = {x,         m.geo_w1,  m.geo_b1,  m.geo_w2, m.geo_b2,
                                 m.fuse_w1, m.fuse_b1, m.fuse_w2, m.fuse_b2};
        auto f = [&](const std::vector<Tensor>& q) {
            EdgeMlp mm{q[1], q[2], q[3], q[4], q[5], q[6], q[7], q[8]};
            return sum(mul(fuse_edge_features(q[0], off, mm), probe));
        };
        CHECK(finite_difference_check(f, p).max_rel_error <= 1e-4);
    }
}

TEST_CASE("info_geometry_project") {
    Tensor zero({1, 1, 4}, 0.0);
    std::mt19937_64 rng(3);
    Tensor w = random_tensor(rng, {4, 4});
    auto np = info_geometry_project(zero, w);
    for (double v : np.theta.data()) CHECK(v == 0.0);
    CHECK(np.eta.item() == 1.0);

    Tensor ten = Tensor({1, 1, 4}, std::vector<double>{6, 0, 8, 0});
    CHECK(info_geometry_project(ten, w).eta.item() == doctest::Approx(2.0).epsilon(1e-15));

    auto big = info_geometry_project(gaussian_tensor(rng, {5, 5, 4}, 50.0), w);
    for (double v : big.theta.data()) CHECK(std::abs(v) < 1.0);
    for (double v : big.eta.data()) CHECK(v >= 1.0);
}

TEST_CASE("fisher_rao_distance") {
    // |theta_0 - theta_1| = 2 and eta = 4 on both edges.
    NaturalParams two{Tensor({1, 2, 2}, std::vector<double>{1.0, 0.0, -1.0, 0.0}),
                      Tensor({1, 2, 1}, std::vector<double>{4.0, 4.0})};
    CHECK(fisher_rao_distance(two, {0, 0}, {0, 1}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(fisher_rao_distance(two, {0, 1}, {0, 1}) == 0.0);
    CHECK_THROWS_AS(fisher_rao_distance(two, {0, 2}, {0, 1}), std::out_of_range);

    std::mt19937_64 rng(4);
    Tensor w = random_tensor(rng, {6, 6});
    auto rp = info_geometry_project(gaussian_tensor(rng, {4, 4, 6}), w);
    for (std::size_t a = 0; a < 16; ++a)
        for (std::size_t b = 0; b < 16; ++b) {
            EdgeIndex i{a / 4, a % 4}, j{b / 4, b % 4};
            double d1 = fisher_rao_distance(rp, i, j), d2 = fisher_rao_distance(rp, j, i);
            CHECK(d1 == d2);
            CHECK(d1 >= 0.0);
        }
}

TEST_CASE("symplectic_step limiting cases") {
    std::mt19937_64 rng(5);
    PhaseState s{gaussian_tensor(rng, {3, 3, 2}), gaussian_tensor(rng, {3, 3, 2})};
    Tensor dt = Tensor::scalar(0.1);
    for (auto variant : {SymplecticVariant::paper_literal, SymplecticVariant::symplectic}) {
        auto zero_force = symplectic_step(s, Tensor({2, 2}, 0.0), dt, variant);
        CHECK(bitwise_equal(zero_force.p, s.p));
        CHECK(max_abs_diff(zero_force.q, add(s.q, scale(s.p, 0.1))) <= 1e-15);
        auto still = symplectic_step(s, random_tensor(rng, {2, 2}), Tensor::scalar(0.0), variant);
        CHECK(bitwise_equal(still.q, s.q));
        CHECK(bitwise_equal(still.p, s.p));
    }
    CHECK_THROWS_AS(split_phase(NaturalParams{Tensor({1, 1, 3}, 0.1), Tensor({1, 1, 1}, 1.0)}), ShapeError);
}

TEST_CASE("phase-space volume: symplectic variant preserves it, literal variant does not") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> dtd(0.01, 0.2);
    bool literal_deviates = false;
    for (int draw = 0; draw < 20; ++draw) {
        std::size_t h = 1 + draw % 4;
        Tensor w = random_tensor(rng, {h, h}, -2.0, 2.0);
        double dt = dtd(rng);
        Eigen::VectorXd x = Eigen::VectorXd::Random(static_cast<Eigen::Index>(2 * h));

        double det_s = numeric_jacobian(x, w, dt, SymplecticVariant::symplectic).determinant();
        CHECK(std::abs(det_s - 1.0) <= 1e-6);

        // F = diag(1 - tanh^2(W q)) W
        Eigen::MatrixXd wm(h, h);
        for (std::size_t i = 0; i < h; ++i)
            for (std::size_t j = 0; j < h; ++j) wm(i, j) = w.at(i, j);
        Eigen::VectorXd z = wm * x.head(static_cast<Eigen::Index>(h));
        Eigen::MatrixXd f = (1.0 - z.array().tanh().square()).matrix().asDiagonal() * wm;
        double expected = (Eigen::MatrixXd::Identity(h, h) + dt * dt * f).determinant();
        double det_l = numeric_jacobian(x, w, dt, SymplecticVariant::paper_literal).determinant();
        CHECK(std::abs(det_l - expected) <= 1e-6);
        if (std::abs(det_l - 1.0) > 1e-4) literal_deviates = true;
    }
    CHECK(literal_deviates);
}

TEST_CASE("residual_enhance") {
    std::mt19937_64 rng(7);
    Tensor e = gaussian_tensor(rng, {3, 3, 8});
    PhaseState ph{gaussian_tensor(rng, {3, 3, 4}), gaussian_tensor(rng, {3, 3, 4})};
    CHECK(bitwise_equal(residual_enhance(e, ph, 0.0), layer_norm(add(e, scale(concat({ph.q, ph.p}, -1), 0.0)))));
    CHECK(max_abs_diff(residual_enhance(e, ph, 0.0), layer_norm(e)) <= 1e-15);

    Tensor out = residual_enhance(e, ph, 0.1);
    Tensor pre = add(e, scale(concat({ph.q, ph.p}, -1), 0.1));
    for (std::size_t r = 0; r < 9; ++r) {
        double mu = 0, var = 0, pmu = 0, pvar = 0;
        for (std::size_t k = 0; k < 8; ++k) {
            mu += out[r * 8 + k];
            pmu += pre[r * 8 + k];
        }
        mu /= 8;
        pmu /= 8;
        for (std::size_t k = 0; k < 8; ++k) {
            var += (out[r * 8 + k] - mu) * (out[r * 8 + k] - mu);
            pvar += (pre[r * 8 + k] - pmu) * (pre[r * 8 + k] - pmu);
        }
        var /= 8;
        pvar /= 8;
        CHECK(std::abs(mu) <= 1e-12);
        // Unit variance up to the layer-norm epsilon: var = s^2 / (s^2 + eps).
        CHECK(std::abs(var - pvar / (pvar + 1e-5)) <= 1e-12);
        CHECK(std::abs(var - 1.0) <= 1e-4);
    }

    Tensor probe = random_tensor(rng, {3, 3, 8});
    auto f = [&](const std::vector<Tensor>& q) {
        return sum(mul(residual_enhance(q[0], PhaseState{q[1], q[2]}, 0.1), probe));
    };
    CHECK(finite_difference_check(f, {e, ph.q, ph.p}).max_rel_error <= 1e-4);
}

TEST_CASE("edge_to_node_aggregate") {
    std::mt19937_64 rng(8);
    Tensor single = gaussian_tensor(rng, {1, 1, 5});
    CHECK(max_abs_diff(edge_to_node_aggregate(single), reshape(single, {1, 5})) <= 1e-15);

    std::vector<double> e = {0.3, -1.0, 2.0};
    std::vector<double> all;
    for (int i = 0; i < 16; ++i) all.insert(all.end(), e.begin(), e.end());
    Tensor agg = edge_to_node_aggregate(Tensor({4, 4, 3}, all));
    for (std::size_t m = 0; m < 4; ++m)
        for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(agg.at(m, k) - e[k]) <= 1e-15);

    for (int trial = 0; trial < 10; ++trial) {
        std::size_t n = 2 + trial % 5;
        Tensor edges = gaussian_tensor(rng, {n, n, 6});
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Tensor permuted = index_select(index_select(edges, 0, perm), 1, perm);
        CHECK(max_abs_diff(edge_to_node_aggregate(permuted), index_select(edge_to_node_aggregate(edges), 0, perm)) <=
              1e-12);
    }
}

TEST_CASE("isre_forward") {
    std::mt19937_64 rng(9);
    IsreWeights w = random_isre(rng, 4, 3, 8);
    for (std::size_t n = 1; n <= 8; ++n) {
        Tensor x = gaussian_tensor(rng, {n, 4});
        Tensor off = build_offset_tensor(gaussian_tensor(rng, {n, 3}));
        Tensor a = isre_forward(x, off, w);
        CHECK(a.shape() == Shape{n, 8});
        CHECK(bitwise_equal(a, isre_forward(x, off, w)));
    }

    Tensor x = gaussian_tensor(rng, {3, 4});
    Tensor off = build_offset_tensor(gaussian_tensor(rng, {3, 3}));
    Tensor probe = random_tensor(rng, {3, 8});
    for (auto variant : {SymplecticVariant::paper_literal, SymplecticVariant::symplectic}) {
        const auto& m = w.edge;
        std::vector<Tensor> p = {x,         m.geo_w1,  m.geo_b1,  m.geo_w2, m.geo_b2, m.fuse_w1,
                                 m.fuse_b1, m.fuse_w2, m.fuse_b2, w.w_eta,  w.w_v,    w.dt_raw};
        auto f = [&](const std::vector<Tensor>& q) {
            IsreWeights ww{EdgeMlp{q[1], q[2], q[3], q[4], q[5], q[6], q[7], q[8]}, q[9], q[10], q[11]};
            return sum(mul(isre_forward(q[0], off, ww, IsreConfig{variant, 0.1}), probe));
        };
        auto r = finite_difference_check(f, p);
        INFO("param " << r.worst_param << " ad=" << r.analytic << " fd=" << r.numeric);
        CHECK(r.max_rel_error <= 1e-4);
    }
}

TEST_CASE("isre on the text modality") {
    std::mt19937_64 rng(10);
    std::size_t dt_dim = 5;
    IsreWeights w = random_isre(rng, dt_dim, 2 * dt_dim, 8);
    Tensor t = gaussian_tensor(rng, {4, dt_dim});
    Tensor out = isre_forward(t, build_text_relation_tensor(t), w);
    CHECK(out.shape() == Shape{4, 8});
}
