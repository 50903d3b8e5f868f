#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "support.hpp"
#include "symploc/hyperbolic.hpp"
#include "symploc/losses.hpp"
#include "symploc/relation.hpp"
#include "symploc/spectral.hpp"

namespace symploc::checks {

using namespace symploc::ad;
using namespace detail;
namespace hyp = symploc::hyperbolic;
namespace rel = symploc::relation;

bool SuiteResult::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

std::string format_suite(const SuiteResult& suite) {
    std::ostringstream out;
    for (const auto& c : suite.checks) {
        out << (c.passed ? "PASS " : "FAIL ") << suite.name << '/' << c.name << "  worst " << sci(c.worst) << " tol "
            << sci(c.tolerance);
        if (!c.passed && !c.detail.empty()) out << "  (" << c.detail << ')';
        out << '\n';
    }
    return out.str();
}

namespace {

Tensor ball_points(Rng& rng, std::size_t rows, std::size_t dim, double c, double max_scaled_radius) {
    std::uniform_real_distribution<double> radius(0.0, max_scaled_radius);
    Tensor dirs = normalize(gaussian(rng, {rows, dim}), -1);
    std::vector<double> v(rows * dim);
    for (std::size_t r = 0; r < rows; ++r) {
        double rad = radius(rng) / std::sqrt(c);
        for (std::size_t j = 0; j < dim; ++j) v[r * dim + j] = dirs[r * dim + j] * rad;
    }
    return Tensor({rows, dim}, v);
}

// Tangent vectors with norms uniform in [0, max_norm].
Tensor tangent_vectors(Rng& rng, std::size_t rows, std::size_t dim, double max_norm) {
    Tensor dirs = normalize(gaussian(rng, {rows, dim}), -1);
    std::uniform_real_distribution<double> len(0.0, max_norm);
    std::vector<double> v(rows * dim);
    for (std::size_t r = 0; r < rows; ++r) {
        double l = len(rng);
        for (std::size_t j = 0; j < dim; ++j) v[r * dim + j] = dirs[r * dim + j] * l;
    }
    return Tensor({rows, dim}, v);
}

double max_scaled_norm(const Tensor& x, double c) {
    Tensor n = norm(x, -1);
    double m = 0.0;
    for (double v : n.data()) m = std::max(m, std::sqrt(c) * v);
    return m;
}

std::vector<std::size_t> random_perm(Rng& rng, std::size_t n) {
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    return perm;
}

Eigen::MatrixXd to_eigen(const Tensor& t) {
    Eigen::MatrixXd m(t.dim(0), t.dim(1));
    for (std::size_t r = 0; r < t.dim(0); ++r)
        for (std::size_t c = 0; c < t.dim(1); ++c) m(r, c) = t.at(r, c);
    return m;
}

Tensor from_eigen(const Eigen::MatrixXd& m) {
    std::vector<double> v(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, v);
}

std::vector<double> softmax_row(const Tensor& beta, std::size_t b) {
    std::size_t k = beta.dim(1);
    double mx = -1e300, s = 0;
    for (std::size_t i = 0; i < k; ++i) mx = std::max(mx, beta.at(b, i));
    std::vector<double> out(k);
    for (std::size_t i = 0; i < k; ++i) s += out[i] = std::exp(beta.at(b, i) - mx);
    for (auto& v : out) v /= s;
    return out;
}

// One symplectic step on a single phase vector [q; p].
Eigen::VectorXd step_map(const Eigen::VectorXd& qp, const Tensor& w, double dt, rel::SymplecticVariant variant) {
    std::size_t h = static_cast<std::size_t>(qp.size() / 2);
    std::vector<double> q(qp.data(), qp.data() + h), p(qp.data() + h, qp.data() + 2 * h);
    auto out = rel::symplectic_step(rel::PhaseState{Tensor({1, h}, q), Tensor({1, h}, p)}, w, Tensor::scalar(dt),
                                    variant);
    Eigen::VectorXd r(2 * h);
    for (std::size_t i = 0; i < h; ++i) {
        r[static_cast<Eigen::Index>(i)] = out.q[i];
        r[static_cast<Eigen::Index>(h + i)] = out.p[i];
    }
    return r;
}

Eigen::MatrixXd numeric_jacobian(const Eigen::VectorXd& x, const Tensor& w, double dt, rel::SymplecticVariant v) {
    const double h = 1e-5;
    Eigen::MatrixXd j(x.size(), x.size());
    for (Eigen::Index c = 0; c < x.size(); ++c) {
        Eigen::VectorXd xp = x, xm = x;
        xp[c] += h;
        xm[c] -= h;
        j.col(c) = (step_map(xp, w, dt, v) - step_map(xm, w, dt, v)) / (2 * h);
    }
    return j;
}

bool all_finite(const Tensor& t) {
    return std::all_of(t.data().begin(), t.data().end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

SuiteResult hyperbolic_suite() {
    SuiteResult out{"hyperbolic", {}, 0.0};
    Stopwatch clock;
    Rng rng(21);

    Bound self("gyro x-x=0", 1e-10), right("gyro x-0=x", 1e-10), left("gyro 0-y=-y", 1e-10);
    Bound trip_v("log(exp(v))=v", 1e-6), trip_y("exp(log(y))=y", 1e-6);
    for (double c : {0.1, 1.0, 2.0}) {
        Tensor ct = Tensor::scalar(c);
        Tensor x = ball_points(rng, 200, 6, c, 0.99);
        Tensor zero(Shape{200, 6}, 0.0);
        self.observe(max_abs_diff(hyp::mobius_sub(x, x, ct), zero));
        right.observe(max_abs_diff(hyp::mobius_sub(x, zero, ct), x));
        left.observe(max_abs_diff(hyp::mobius_sub(zero, x, ct), neg(x)));

        Tensor base = ball_points(rng, 200, 5, c, 0.5);
        Tensor v = tangent_vectors(rng, 200, 5, 0.5);
        trip_v.observe(max_abs_diff(hyp::log_map(base, hyp::exp_map(base, v, ct), ct), v), "c=" + sci(c));
        Tensor y = ball_points(rng, 200, 5, c, 0.5);
        trip_y.observe(max_abs_diff(hyp::exp_map(base, hyp::log_map(base, y, ct), ct), y), "c=" + sci(c));
    }
    for (auto* b : {&self, &right, &left, &trip_v, &trip_y}) out.checks.push_back(b->done());

    // 10^4 row-level operations over random curvatures, both modes.
    // Observed value: how far the largest sqrt(c)|x| exceeds the clamp radius.
    Bound contain("ball containment (10^4 ops)", 1e-12);
    const double radius = 1.0 - hyp::kBallMargin;
    std::uniform_real_distribution<double> cdist(0.05, 4.0);
    std::size_t ops = 0;
    while (ops < 10000) {
        double c = cdist(rng);
        Tensor ct = Tensor::scalar(c);
        const std::size_t rows = 25;
        Tensor x = ball_points(rng, rows, 4, c, 0.99999);
        Tensor y = ball_points(rng, rows, 4, c, 0.99999);
        Tensor v = gaussian(rng, {rows, 4}, 3.0);
        for (auto mode : {hyp::GeometryMode::standard, hyp::GeometryMode::paper_literal}) {
            contain.observe(max_scaled_norm(hyp::mobius_sub(x, y, ct, mode), c) - radius);
            contain.observe(max_scaled_norm(hyp::exp_map(x, v, ct, mode), c) - radius);
            contain.observe(max_scaled_norm(hyp::exp_map(x, hyp::log_map(x, y, ct, mode), ct, mode), c) - radius);
            ops += 3 * rows;
        }
        contain.observe(max_scaled_norm(hyp::mobius_add(x, y, ct), c) - radius);
        contain.observe(max_scaled_norm(hyp::clamp_to_ball(gaussian(rng, {rows, 4}, 10.0), ct), c) - radius);
        ops += 2 * rows;
    }
    out.checks.push_back(contain.done());
    out.seconds = clock.seconds();
    return out;
}

SuiteResult symplectic_suite() {
    SuiteResult out{"symplectic", {}, 0.0};
    Stopwatch clock;
    Rng rng(6);
    std::uniform_real_distribution<double> dtd(0.01, 0.2);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Bound sym("momentum-first det = 1", 1e-6), lit("paper-literal det = det(I + dt^2 F)", 1e-6);
    Bound deviates("paper-literal departs from 1", 0.0);
    double largest_departure = 0.0;
    for (int draw = 0; draw < 20; ++draw) {
        std::size_t h = 1 + static_cast<std::size_t>(draw % 4);
        Tensor w = uniform(rng, {h, h}, -2.0, 2.0);
        double dt = dtd(rng);
        Eigen::VectorXd x(static_cast<Eigen::Index>(2 * h));
        for (auto& v : x) v = unit(rng);

        double det_s = numeric_jacobian(x, w, dt, rel::SymplecticVariant::symplectic).determinant();
        sym.observe(std::abs(det_s - 1.0), "draw " + std::to_string(draw));

        // F = diag(1 - tanh^2(W q)) W
        Eigen::MatrixXd wm = to_eigen(w);
        Eigen::VectorXd z = wm * x.head(static_cast<Eigen::Index>(h));
        Eigen::MatrixXd f = (1.0 - z.array().tanh().square()).matrix().asDiagonal() * wm;
        double expected = (Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(h)) +
                           dt * dt * f)
                              .determinant();
        double det_l = numeric_jacobian(x, w, dt, rel::SymplecticVariant::paper_literal).determinant();
        lit.observe(std::abs(det_l - expected), "draw " + std::to_string(draw));
        largest_departure = std::max(largest_departure, std::abs(det_l - 1.0));
    }
    deviates.require(largest_departure > 1e-4, "max |det - 1| = " + sci(largest_departure));
    out.checks.push_back(sym.done());
    out.checks.push_back(lit.done());
    out.checks.push_back(deviates.done());
    out.seconds = clock.seconds();
    return out;
}

SuiteResult spectral_suite() {
    SuiteResult out{"spectral", {}, 0.0};
    Stopwatch clock;
    Rng rng(5);

    Bound eig_bound("chebyshev vs eigendecomposition (N<=16, K<=5)", 1e-8);
    for (std::size_t n = 1; n <= 16; ++n) {
        for (std::size_t k = 1; k <= 5; ++k) {
            Eigen::MatrixXd m = to_eigen(gaussian(rng, {n, n}));
            Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
            sym /= sym.cwiseAbs().maxCoeff() + 1e-12;
            Tensor x = gaussian(rng, {n, 3});
            Tensor beta = gaussian(rng, {3, k});
            auto ys = spectral::chebyshev_filter_bank(from_eigen(sym), x, beta);
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sym);
            const Eigen::VectorXd& lam = eig.eigenvalues();
            for (std::size_t b = 0; b < 3; ++b) {
                auto w = softmax_row(beta, b);
                Eigen::VectorXd gain = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
                for (Eigen::Index i = 0; i < lam.size(); ++i) {
                    double t_prev = 1.0, t_cur = lam[i];
                    gain[i] = w[0];
                    for (std::size_t j = 1; j < k; ++j) {
                        gain[i] += w[j] * t_cur;
                        double t_next = 2.0 * lam[i] * t_cur - t_prev;
                        t_prev = t_cur;
                        t_cur = t_next;
                    }
                }
                Eigen::MatrixXd expected = eig.eigenvectors() * gain.asDiagonal() * eig.eigenvectors().transpose() *
                                           to_eigen(x);
                eig_bound.observe((to_eigen(ys[b]) - expected).cwiseAbs().maxCoeff(),
                                  "N=" + std::to_string(n) + " K=" + std::to_string(k));
            }
        }
    }
    out.checks.push_back(eig_bound.done());

    Bound diag_bound("chebyshev on diagonal L = cos(k arccos lambda)", 1e-10);
    std::uniform_real_distribution<double> lam(-1.0, 1.0);
    for (std::size_t k = 1; k <= 6; ++k) {
        const std::size_t n = 9;
        std::vector<double> diag(n * n, 0.0), lambdas(n);
        for (std::size_t i = 0; i < n; ++i) diag[i * n + i] = lambdas[i] = lam(rng);
        Tensor x = gaussian(rng, {n, 4});
        Tensor beta = gaussian(rng, {3, k});
        auto ys = spectral::chebyshev_filter_bank(Tensor({n, n}, diag), x, beta);
        for (std::size_t b = 0; b < 3; ++b) {
            auto w = softmax_row(beta, b);
            for (std::size_t i = 0; i < n; ++i) {
                double gain = 0;
                for (std::size_t j = 0; j < k; ++j)
                    gain += w[j] * std::cos(static_cast<double>(j) * std::acos(lambdas[i]));
                for (std::size_t c = 0; c < 4; ++c) diag_bound.observe(std::abs(ys[b].at(i, c) - gain * x.at(i, c)));
            }
        }
    }
    out.checks.push_back(diag_bound.done());
    out.seconds = clock.seconds();
    return out;
}

SuiteResult permutation_suite() {
    SuiteResult out{"permutation", {}, 0.0};
    Stopwatch clock;
    Rng rng(7);

    ParamStore store;
    Rng init(7);
    spectral::add_point_global_params(store, init, "g", spectral::SmtConfig{8, 4});
    spectral::add_language_pool_params(store, init, "lang", 8);
    ParamView view(store);

    Bound agg("relation aggregation equivariance", 1e-12);
    Bound isre("relation encoder equivariance", 1e-12);
    Bound smt("SMT through attention equivariance", 1e-12);
    Bound point("point descriptor invariance (bitwise)", 0.0);
    Bound lang("language descriptor invariance (bitwise)", 0.0);

    rel::IsreWeights w{
        rel::EdgeMlp{uniform(rng, {3, 2}), uniform(rng, {2}), uniform(rng, {2, 2}), uniform(rng, {2}),
                     uniform(rng, {2 * 5 + 2, 8}), uniform(rng, {8}), uniform(rng, {8, 8}), uniform(rng, {8})},
        uniform(rng, {8, 8}), uniform(rng, {4, 4}), Tensor::scalar(std::log(std::expm1(0.1)))};

    for (int trial = 0; trial < 20; ++trial) {
        std::size_t n = 2 + static_cast<std::size_t>(trial % 7);
        auto perm = random_perm(rng, n);

        Tensor edges = gaussian(rng, {n, n, 6});
        Tensor edges_p = index_select(index_select(edges, 0, perm), 1, perm);
        agg.observe(max_abs_diff(rel::edge_to_node_aggregate(edges_p),
                                 index_select(rel::edge_to_node_aggregate(edges), 0, perm)));

        Tensor f = gaussian(rng, {n, 5});
        Tensor offs = rel::build_offset_tensor(gaussian(rng, {n, 3}, 4.0));
        Tensor offs_p = index_select(index_select(offs, 0, perm), 1, perm);
        for (auto variant : {rel::SymplecticVariant::paper_literal, rel::SymplecticVariant::symplectic}) {
            rel::IsreConfig cfg{variant, 0.1};
            isre.observe(max_abs_diff(rel::isre_forward(index_select(f, 0, perm), offs_p, w, cfg),
                                      index_select(rel::isre_forward(f, offs, w, cfg), 0, perm)));
        }

        Tensor x = gaussian(rng, {n, 8});
        smt.observe(max_abs_diff(spectral::smt_features(view, "g", index_select(x, 0, perm)).kappa,
                                 index_select(spectral::smt_features(view, "g", x).kappa, 0, perm)));

        Tensor c = gaussian(rng, {n, 3}, 5.0);
        point.require(bitwise_equal(spectral::point_global_descriptor(view, "g", x, c),
                                    spectral::point_global_descriptor(view, "g", index_select(x, 0, perm),
                                                                      index_select(c, 0, perm))),
                      "N=" + std::to_string(n));
        Tensor hints = gaussian(rng, {n, 8});
        lang.require(bitwise_equal(spectral::pool_language_global(view, "lang", hints).descriptor,
                                   spectral::pool_language_global(view, "lang", index_select(hints, 0, perm))
                                       .descriptor),
                     "N=" + std::to_string(n));
    }
    for (auto* b : {&agg, &isre, &smt, &point, &lang}) out.checks.push_back(b->done());
    out.seconds = clock.seconds();
    return out;
}

SuiteResult loss_suite() {
    SuiteResult out{"losses", {}, 0.0};
    Stopwatch clock;
    Rng rng(4);
    Tensor a = losses::scale_from_raw(Tensor::scalar(losses::raw_from_scale(1.0)));

    Bound finite("no NaN/Inf for B in 1..8", 0.0);
    Bound positive("all-positive batch gives exactly 0", 0.0);
    Bound overlap("J = 1 gives exactly 0", 0.0);
    std::uniform_int_distribution<std::size_t> len(1, 5);
    auto sets = [&](std::size_t count) {
        std::vector<Tensor> s;
        for (std::size_t i = 0; i < count; ++i) s.push_back(gaussian(rng, {len(rng), 8}));
        return s;
    };
    for (std::size_t b = 1; b <= 8; ++b) {
        for (int rep = 0; rep < 10; ++rep) {
            std::string where = "B=" + std::to_string(b);
            auto l = losses::batch_lambdas(sets(b), sets(b));
            Tensor s = losses::bidirectional_similarity(l.xt, l.tx, 0.07);
            Tensor sg = losses::global_similarity(gaussian(rng, {b, 8}, 50.0), gaussian(rng, {b, 8}), 0.01);
            Tensor iou = uniform(rng, {b, b}, 0.0, 1.0);
            for (const Tensor& sim : {s, sg}) {
                finite.require(all_finite(sim), where);
                finite.require(all_finite(losses::negative_repulsion_loss(sim, Tensor::scalar(0.3), a)), where);
                finite.require(all_finite(losses::negative_repulsion_loss(sim, iou, a)), where);
                overlap.require(losses::negative_repulsion_loss(sim, Tensor({b, b}, 1.0), a).item() == 0.0, where);
                overlap.require(losses::negative_repulsion_loss(sim, Tensor::scalar(1.0), a).item() == 0.0, where);
                // With one pair the batch holds only its positive.
                if (b == 1) positive.require(losses::negative_repulsion_loss(sim, iou, a).item() == 0.0, where);
            }
        }
    }
    for (auto* bd : {&finite, &positive, &overlap}) out.checks.push_back(bd->done());
    out.seconds = clock.seconds();
    return out;
}

std::vector<SuiteResult> invariant_suites() {
    return {hyperbolic_suite(), symplectic_suite(), spectral_suite(), permutation_suite(), loss_suite()};
}

}  // namespace symploc::checks
