#include <cmath>
#include <string>

#include "support.hpp"
#include "symploc/hyperbolic.hpp"
#include "symploc/losses.hpp"
#include "symploc/pipeline/train.hpp"
#include "symploc/relation.hpp"
#include "symploc/spectral.hpp"

namespace symploc::checks {

using namespace symploc::ad;
using namespace detail;
namespace hyp = symploc::hyperbolic;
namespace rel = symploc::relation;

namespace {

constexpr double kFdStep = 1e-5;
constexpr double kFdTolerance = 1e-4;

using Fn = std::function<Tensor(const std::vector<Tensor>&)>;

std::string located(const GradCheckResult& r) {
    return "param " + std::to_string(r.worst_param) + "[" + std::to_string(r.worst_index) + "] ad=" + sci(r.analytic) +
           " fd=" + sci(r.numeric);
}

// Contracts the output with a random cotangent so every coordinate counts.
void probe_case(Bound& bound, Rng& rng, std::vector<Tensor> params, const Fn& fn) {
    Tensor w = uniform(rng, fn(params).shape());
    auto r = finite_difference_check([&](const std::vector<Tensor>& p) { return sum(mul(fn(p), w)); }, params,
                                     kFdStep);
    bound.observe(r.max_rel_error, located(r));
}

struct Primitive {
    const char* name;
    std::vector<Shape> shapes;
    double lo, hi;
    Fn fn;
};

std::vector<Primitive> primitives() {
    using V = std::vector<Tensor>;
    return {
        {"add", {{3, 4}, {4}}, -1, 1, [](const V& p) { return add(p[0], p[1]); }},
        {"sub", {{3, 1}, {3, 4}}, -1, 1, [](const V& p) { return sub(p[0], p[1]); }},
        {"mul", {{2, 3, 4}, {3, 1}}, -1, 1, [](const V& p) { return mul(p[0], p[1]); }},
        {"div", {{3, 4}, {3, 4}}, 0.5, 2, [](const V& p) { return div(p[0], p[1]); }},
        {"pow", {{3, 4}, {}}, 0.2, 2, [](const V& p) { return pow(p[0], p[1]); }},
        {"maximum", {{5}, {5}}, -1, 1, [](const V& p) { return maximum(p[0], p[1]); }},
        {"minimum", {{5}, {5}}, -1, 1, [](const V& p) { return minimum(p[0], p[1]); }},
        {"scale", {{4}}, -1, 1, [](const V& p) { return scale(p[0], -2.5); }},
        {"shift", {{4}}, -1, 1, [](const V& p) { return shift(p[0], 0.75); }},
        {"neg", {{4}}, -1, 1, [](const V& p) { return neg(p[0]); }},
        {"tanh", {{3, 3}}, -2, 2, [](const V& p) { return tanh(p[0]); }},
        {"sigmoid", {{3, 3}}, -3, 3, [](const V& p) { return sigmoid(p[0]); }},
        {"softplus", {{3, 3}}, -3, 3, [](const V& p) { return softplus(p[0]); }},
        {"exp", {{3, 3}}, -2, 2, [](const V& p) { return exp(p[0]); }},
        {"log", {{3, 3}}, 0.3, 3, [](const V& p) { return log(p[0]); }},
        {"cosh", {{3, 3}}, -2, 2, [](const V& p) { return cosh(p[0]); }},
        {"sinh", {{3, 3}}, -2, 2, [](const V& p) { return sinh(p[0]); }},
        {"atanh", {{3, 3}}, -0.9, 0.9, [](const V& p) { return atanh(p[0]); }},
        {"sqrt", {{3, 3}}, 0.2, 3, [](const V& p) { return sqrt(p[0]); }},
        {"square", {{3, 3}}, -2, 2, [](const V& p) { return square(p[0]); }},
        {"clamp", {{6}}, -2, 2, [](const V& p) { return clamp(p[0], -0.7, 0.9); }},
        {"matmul", {{3, 4}, {4, 2}}, -1, 1, [](const V& p) { return matmul(p[0], p[1]); }},
        {"transpose", {{3, 4}}, -1, 1, [](const V& p) { return transpose(p[0]); }},
        {"reshape", {{3, 4}}, -1, 1, [](const V& p) { return reshape(p[0], {2, 6}); }},
        {"concat", {{2, 3}, {2, 2}}, -1, 1, [](const V& p) { return concat({p[0], p[1]}, 1); }},
        {"slice", {{4, 3}}, -1, 1, [](const V& p) { return slice(p[0], 0, 1, 3); }},
        {"index_select", {{4, 3}}, -1, 1, [](const V& p) { return index_select(p[0], 0, {3, 0, 0, 2}); }},
        {"sum", {{3, 4}}, -1, 1, [](const V& p) { return sum(p[0]); }},
        {"sum_axis", {{3, 4}}, -1, 1, [](const V& p) { return sum(p[0], 0); }},
        {"mean", {{3, 4}}, -1, 1, [](const V& p) { return mean(p[0]); }},
        {"mean_axis", {{3, 4}}, -1, 1, [](const V& p) { return mean(p[0], -1, true); }},
        {"max_axis", {{3, 4}}, -1, 1, [](const V& p) { return max(p[0], 1); }},
        {"norm", {{3, 4}}, -1, 1, [](const V& p) { return norm(p[0], -1); }},
        {"segment_max", {{3, 5}}, -1, 1, [](const V& p) { return segment_max(p[0], 1, {2, 3}); }},
        {"segment_mean", {{5, 2}}, -1, 1, [](const V& p) { return segment_mean(p[0], 0, {1, 4}); }},
        {"softmax", {{3, 4}}, -2, 2, [](const V& p) { return softmax(p[0], 1); }},
        {"layer_norm", {{3, 5}}, -2, 2, [](const V& p) { return layer_norm(p[0]); }},
        {"normalize", {{3, 4}}, -1, 1, [](const V& p) { return normalize(p[0], -1); }},
    };
}

// Points strictly inside the ball of curvature c, scaled radius below 0.7.
Tensor ball_points(Rng& rng, std::size_t rows, std::size_t dim, double c) {
    Tensor dirs = normalize(gaussian(rng, {rows, dim}), -1);
    std::uniform_real_distribution<double> radius(0.05, 0.7);
    std::vector<double> v(rows * dim);
    for (std::size_t r = 0; r < rows; ++r) {
        double rad = radius(rng) / std::sqrt(c);
        for (std::size_t j = 0; j < dim; ++j) v[r * dim + j] = dirs[r * dim + j] * rad;
    }
    return Tensor({rows, dim}, v);
}

rel::EdgeMlp unpack_mlp(const std::vector<Tensor>& p, std::size_t at) {
    return rel::EdgeMlp{p[at], p[at + 1], p[at + 2], p[at + 3], p[at + 4], p[at + 5], p[at + 6], p[at + 7]};
}

std::vector<Tensor> edge_mlp_params(Rng& rng, std::size_t df, std::size_t g, std::size_t d) {
    std::size_t h = d / 4;
    return {uniform(rng, {g, h}),          uniform(rng, {h}), uniform(rng, {h, h}), uniform(rng, {h}),
            uniform(rng, {2 * df + h, d}), uniform(rng, {d}), uniform(rng, {d, d}), uniform(rng, {d})};
}

void add_module_checks(SuiteResult& out) {
    Rng rng(2024);
    auto run = [&](const std::string& name, auto body) {
        Bound b(name, kFdTolerance);
        body(b);
        out.checks.push_back(b.done());
    };

    for (auto mode : {hyp::GeometryMode::standard, hyp::GeometryMode::paper_literal}) {
        std::string tag = mode == hyp::GeometryMode::standard ? "standard" : "paper_literal";
        run("hyperbolic.mobius_sub." + tag, [&](Bound& b) {
            probe_case(b, rng, {ball_points(rng, 4, 5, 1.3), ball_points(rng, 4, 5, 1.3), Tensor::scalar(1.3)},
                       [mode](const auto& p) { return hyp::mobius_sub(p[0], p[1], p[2], mode); });
        });
        run("hyperbolic.exp_map." + tag, [&](Bound& b) {
            probe_case(b, rng, {ball_points(rng, 4, 5, 0.8), scale(gaussian(rng, {4, 5}), 0.3), Tensor::scalar(0.8)},
                       [mode](const auto& p) { return hyp::exp_map(p[0], p[1], p[2], mode); });
        });
        run("hyperbolic.log_map." + tag, [&](Bound& b) {
            probe_case(b, rng, {ball_points(rng, 4, 5, 0.8), ball_points(rng, 4, 5, 0.8), Tensor::scalar(0.8)},
                       [mode](const auto& p) { return hyp::log_map(p[0], p[1], p[2], mode); });
        });
        run("hyperbolic.rie_forward." + tag, [&](Bound& b) {
            probe_case(b, rng,
                       {gaussian(rng, {4, 6}), uniform(rng, {6, 6}), uniform(rng, {6, 6}), uniform(rng, {6, 6}),
                        Tensor::scalar(0.3), Tensor::scalar(0.9), Tensor::scalar(0.2)},
                       [mode](const auto& p) {
                           return hyp::rie_forward(p[0], hyp::BallParams{p[4], p[5], p[6]},
                                                   hyp::AttentionWeights{p[1], p[2], p[3]}, mode);
                       });
        });
    }
    run("hyperbolic.mobius_add", [&](Bound& b) {
        probe_case(b, rng, {ball_points(rng, 4, 5, 2.0), ball_points(rng, 4, 5, 2.0), Tensor::scalar(2.0)},
                   [](const auto& p) { return hyp::mobius_add(p[0], p[1], p[2]); });
    });
    run("hyperbolic.project_to_manifold", [&](Bound& b) {
        probe_case(b, rng, {gaussian(rng, {4, 5}), Tensor::scalar(0.7)},
                   [](const auto& p) { return hyp::project_to_manifold(p[0], p[1]); });
    });

    const std::size_t n = 4, df = 3, d = 8;
    run("relation.fuse_edge_features", [&](Bound& b) {
        std::vector<Tensor> p = {gaussian(rng, {n, df}), gaussian(rng, {n, n, 3})};
        auto mlp = edge_mlp_params(rng, df, 3, d);
        p.insert(p.end(), mlp.begin(), mlp.end());
        probe_case(b, rng, p, [](const auto& q) { return rel::fuse_edge_features(q[0], q[1], unpack_mlp(q, 2)); });
    });
    run("relation.info_geometry_project", [&](Bound& b) {
        std::vector<Tensor> p = {gaussian(rng, {n, n, d}), scale(uniform(rng, {d, d}), 0.3)};
        probe_case(b, rng, p, [](const auto& q) { return rel::info_geometry_project(q[0], q[1]).theta; });
        probe_case(b, rng, p, [](const auto& q) { return rel::info_geometry_project(q[0], q[1]).eta; });
    });
    for (auto variant : {rel::SymplecticVariant::paper_literal, rel::SymplecticVariant::symplectic}) {
        std::string tag = variant == rel::SymplecticVariant::symplectic ? "symplectic" : "paper_literal";
        run("relation.symplectic_step." + tag, [&](Bound& b) {
            std::vector<Tensor> p = {gaussian(rng, {n, n, d / 2}), gaussian(rng, {n, n, d / 2}),
                                     uniform(rng, {d / 2, d / 2}), Tensor::scalar(0.15)};
            auto f = [variant](const auto& q) {
                auto s = rel::symplectic_step(rel::PhaseState{q[0], q[1]}, q[2], q[3], variant);
                return concat({s.q, s.p}, -1);
            };
            probe_case(b, rng, p, f);
        });
        run("relation.isre_forward." + tag, [&](Bound& b) {
            std::vector<Tensor> p = {gaussian(rng, {n, df}), gaussian(rng, {n, n, 3})};
            auto mlp = edge_mlp_params(rng, df, 3, d);
            p.insert(p.end(), mlp.begin(), mlp.end());
            p.push_back(uniform(rng, {d, d}));
            p.push_back(uniform(rng, {d / 2, d / 2}));
            p.push_back(Tensor::scalar(std::log(std::expm1(0.1))));
            auto f = [variant](const auto& q) {
                rel::IsreWeights w{unpack_mlp(q, 2), q[10], q[11], q[12]};
                return rel::isre_forward(q[0], q[1], w, rel::IsreConfig{variant, 0.1});
            };
            probe_case(b, rng, p, f);
        });
    }
    run("relation.residual_enhance", [&](Bound& b) {
        std::vector<Tensor> p = {gaussian(rng, {n, n, d}), gaussian(rng, {n, n, d / 2}), gaussian(rng, {n, n, d / 2})};
        probe_case(b, rng, p,
                   [](const auto& q) { return rel::residual_enhance(q[0], rel::PhaseState{q[1], q[2]}, 0.1); });
    });
    run("relation.edge_to_node_aggregate", [&](Bound& b) {
        probe_case(b, rng, {gaussian(rng, {n, n, d})}, [](const auto& q) { return rel::edge_to_node_aggregate(q[0]); });
    });

    run("spectral.similarity_graph", [&](Bound& b) {
        probe_case(b, rng, {gaussian(rng, {5, 4}), Tensor::scalar(3.0)},
                   [](const auto& q) { return spectral::build_similarity_graph(q[0], q[1]).a_hat; });
    });
    run("spectral.scaled_laplacian", [&](Bound& b) {
        probe_case(b, rng, {gaussian(rng, {5, 4}), Tensor::scalar(3.0)}, [](const auto& q) {
            return spectral::scaled_laplacian(spectral::build_similarity_graph(q[0], q[1]));
        });
    });
    run("spectral.chebyshev_filter_bank", [&](Bound& b) {
        Tensor m = gaussian(rng, {5, 5});
        Tensor l = scale(add(m, transpose(m)), 0.25);
        probe_case(b, rng, {l, gaussian(rng, {5, 4}), gaussian(rng, {3, 4})}, [](const auto& q) {
            auto ys = spectral::chebyshev_filter_bank(q[0], q[1], q[2]);
            return concat({ys[0], ys[1], ys[2]}, 1);
        });
    });
    run("spectral.triple_cross_attention", [&](Bound& b) {
        probe_case(b, rng, {gaussian(rng, {5, 4}), gaussian(rng, {5, 4}), gaussian(rng, {5, 4})}, [](const auto& q) {
            return spectral::triple_cross_attention(q[0], q[1], q[2]).kappa;
        });
    });
    {
        ParamStore store;
        Rng init(31);
        spectral::add_point_global_params(store, init, "g", spectral::SmtConfig{d, 3});
        spectral::add_language_pool_params(store, init, "lang", d);
        Tensor x = gaussian(rng, {n, d});
        Tensor c = gaussian(rng, {n, 3}, 5.0);
        Tensor hints = gaussian(rng, {3, d});
        Tensor w = uniform(rng, {1, d});
        run("spectral.point_global_descriptor", [&](Bound& b) {
            auto r = nn::gradient_check(
                store,
                [&](const ParamView& p) { return sum(mul(spectral::point_global_descriptor(p, "g", x, c), w)); },
                store.names_with_prefix("g."), kFdStep);
            b.observe(r.max_rel_error, located(r));
        });
        run("spectral.pool_language_global", [&](Bound& b) {
            auto r = nn::gradient_check(
                store,
                [&](const ParamView& p) {
                    return sum(mul(spectral::pool_language_global(p, "lang", hints).descriptor, w));
                },
                store.names_with_prefix("lang."), kFdStep);
            b.observe(r.max_rel_error, located(r));
        });
    }

    run("losses.set_to_set_lambda", [&](Bound& b) {
        probe_case(b, rng, {gaussian(rng, {4, 5}), gaussian(rng, {3, 5})},
                   [](const auto& q) { return losses::set_to_set_lambda(q[0], q[1]); });
    });
    run("losses.bidirectional_similarity", [&](Bound& b) {
        probe_case(b, rng, {gaussian(rng, {3, 5}), gaussian(rng, {2, 5}), gaussian(rng, {4, 5}), gaussian(rng, {1, 5}),
                            gaussian(rng, {3, 5}), gaussian(rng, {2, 5})},
                   [](const auto& q) {
                       auto l = losses::batch_lambdas({q[0], q[1], q[2]}, {q[3], q[4], q[5]});
                       return losses::bidirectional_similarity(l.xt, l.tx, 0.5);
                   });
    });
    run("losses.global_similarity", [&](Bound& b) {
        probe_case(b, rng, {gaussian(rng, {3, 5}), gaussian(rng, {3, 5})},
                   [](const auto& q) { return losses::global_similarity(q[0], q[1], 0.5); });
    });
    run("losses.negative_repulsion_loss", [&](Bound& b) {
        Tensor s = uniform(rng, {3, 3}, 0.05, 0.9);
        probe_case(b, rng, {s, uniform(rng, {3, 3}, 0.0, 0.9), Tensor::scalar(0.8)},
                   [](const auto& q) { return losses::negative_repulsion_loss(q[0], q[1], q[2]); });
    });
}

void add_branch_loss_checks(SuiteResult& out) {
    using namespace symploc::pipeline;
    DataConfig dc;
    dc.seed = 12;
    dc.num_submaps = 8;
    dc.train_queries = 8;
    dc.val_queries = 0;
    dc.feature_dim = 4;
    dc.class_text_dim = 2;
    dc.direction_dim = 2;
    dc.min_instances = dc.max_instances = 4;  // N_s = 4
    dc.min_hints = 2;
    dc.max_hints = 3;
    Dataset data = generate_synthetic_dataset(dc);
    ModelConfig mc;
    mc.dim = 8;
    mc.feature_dim = dc.feature_dim;
    mc.text_dim = dc.text_dim();
    mc.cheb_order = 3;
    ParamStore params = init_params(mc, 12);
    auto qs = data.split(Split::train);
    Rng rng(12);
    auto idx = sample_batch(rng, qs, 2);
    std::vector<const Query*> batch_q = {qs[idx[0]], qs[idx[1]]};
    std::vector<const Submap*> batch_s = {&data.submap(batch_q[0]->gt_submap), &data.submap(batch_q[1]->gt_submap)};

    auto branch = [&](const std::string& name, const std::string& prefix, auto loss) {
        Bound b("loss." + name, kFdTolerance);
        auto names = params.names_with_prefix(prefix);
        auto r = nn::gradient_check(params, loss, names, kFdStep);
        b.observe(r.max_rel_error, names[r.worst_param] + "[" + std::to_string(r.worst_index) + "] ad=" +
                                       sci(r.analytic) + " fd=" + sci(r.numeric));
        out.checks.push_back(b.done());
    };
    branch("instance", "inst.", [&](const ParamView& p) { return coarse_losses(p, mc, batch_s, batch_q).instance; });
    branch("relation", "rel.", [&](const ParamView& p) { return coarse_losses(p, mc, batch_s, batch_q).relation; });
    branch("global", "glob.", [&](const ParamView& p) { return coarse_losses(p, mc, batch_s, batch_q).global; });
    branch("fine", "fine.", [&](const ParamView& p) { return fine_loss(p, batch_s, batch_q); });
}

}  // namespace

SuiteResult gradient_suite() {
    SuiteResult out{"gradient", {}, 0.0};
    Stopwatch clock;
    for (const auto& pc : primitives()) {
        Bound b(std::string("op.") + pc.name, kFdTolerance);
        for (unsigned seed = 0; seed < 5; ++seed) {
            Rng rng(1000 + seed);
            std::vector<Tensor> params;
            for (const auto& s : pc.shapes) params.push_back(uniform(rng, s, pc.lo, pc.hi));
            probe_case(b, rng, params, pc.fn);
        }
        out.checks.push_back(b.done());
    }
    add_module_checks(out);
    add_branch_loss_checks(out);
    out.seconds = clock.seconds();
    return out;
}

}  // namespace symploc::checks
