#include "symploc/relation.hpp"

#include <cmath>

#include "symploc/nn.hpp"

namespace symploc::relation {

using namespace symploc::ad;

namespace {

// Row m * n_count + n of the pair grid takes row m (first) and row n (second).
std::vector<std::size_t> pair_first(std::size_t n) {
    std::vector<std::size_t> idx(n * n);
    for (std::size_t i = 0; i < n * n; ++i) idx[i] = i / n;
    return idx;
}

std::vector<std::size_t> pair_second(std::size_t n) {
    std::vector<std::size_t> idx(n * n);
    for (std::size_t i = 0; i < n * n; ++i) idx[i] = i % n;
    return idx;
}

Tensor mlp2(const Tensor& x, const Tensor& w1, const Tensor& b1, const Tensor& w2, const Tensor& b2) {
    return nn::linear(ad::tanh(nn::linear(x, w1, &b1)), w2, &b2);
}

}  // namespace

Tensor build_offset_tensor(const Tensor& centroids) {
    if (centroids.rank() != 2 || centroids.dim(0) == 0) {
        throw ShapeError("build_offset_tensor: expected [N, 3] centroids, got " + shape_string(centroids.shape()));
    }
    std::size_t n = centroids.dim(0);
    Tensor diff = sub(index_select(centroids, 0, pair_first(n)), index_select(centroids, 0, pair_second(n)));
    return reshape(diff, {n, n, centroids.dim(1)});
}

Tensor build_text_relation_tensor(const Tensor& features) {
    if (features.rank() != 2 || features.dim(0) == 0) {
        throw ShapeError("build_text_relation_tensor: expected [N, D] features");
    }
    std::size_t n = features.dim(0);
    Tensor pairs = concat({index_select(features, 0, pair_first(n)), index_select(features, 0, pair_second(n))}, 1);
    return reshape(pairs, {n, n, 2 * features.dim(1)});
}

Tensor fuse_edge_features(const Tensor& features, const Tensor& offsets, const EdgeMlp& mlp) {
    if (features.rank() != 2) throw ShapeError("fuse_edge_features: features must be [N, D_f]");
    std::size_t n = features.dim(0);
    if (offsets.rank() != 3 || offsets.dim(0) != n || offsets.dim(1) != n) {
        throw ShapeError("fuse_edge_features: offsets " + shape_string(offsets.shape()) + " do not match " +
                         std::to_string(n) + " instances");
    }
    if (offsets.dim(2) != mlp.geo_w1.dim(0)) {
        throw ShapeError("fuse_edge_features: offset width " + std::to_string(offsets.dim(2)) +
                         " does not match MLP_geo input " + std::to_string(mlp.geo_w1.dim(0)));
    }
    Tensor geo = mlp2(reshape(offsets, {n * n, offsets.dim(2)}), mlp.geo_w1, mlp.geo_b1, mlp.geo_w2, mlp.geo_b2);
    Tensor joined =
        concat({index_select(features, 0, pair_first(n)), index_select(features, 0, pair_second(n)), geo}, 1);
    Tensor edges = mlp2(joined, mlp.fuse_w1, mlp.fuse_b1, mlp.fuse_w2, mlp.fuse_b2);
    return reshape(edges, {n, n, edges.dim(1)});
}

NaturalParams info_geometry_project(const Tensor& edges, const Tensor& w_eta) {
    if (edges.rank() != 3) throw ShapeError("info_geometry_project: edges must be [N, N, D]");
    // tanh rounds to exactly +-1 once |z| > ~19; keep theta strictly inside.
    constexpr double kThetaLimit = 1.0 - 1e-12;
    Tensor theta = clamp(ad::tanh(nn::linear(edges, w_eta, nullptr)), -kThetaLimit, kThetaLimit);
    Tensor eta = shift(scale(norm(edges, -1, true), 0.1), 1.0);
    return NaturalParams{theta, eta};
}

double fisher_rao_distance(const NaturalParams& params, EdgeIndex i, EdgeIndex j) {
    const auto& s = params.theta.shape();
    if (i.m >= s[0] || i.n >= s[1] || j.m >= s[0] || j.n >= s[1]) {
        throw std::out_of_range("fisher_rao_distance: edge index out of range");
    }
    std::size_t d = s[2];
    const double* th = params.theta.ptr();
    std::size_t oi = (i.m * s[1] + i.n), oj = (j.m * s[1] + j.n);
    double acc = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        double diff = th[oi * d + k] - th[oj * d + k];
        acc += diff * diff;
    }
    double eta_bar = 0.5 * (params.eta[oi] + params.eta[oj]);
    return std::sqrt(acc) / std::sqrt(eta_bar);
}

PhaseState split_phase(const NaturalParams& params) {
    std::size_t d = params.theta.shape().back();
    if (d % 2 != 0) throw ShapeError("split_phase: feature dimension must be even, got " + std::to_string(d));
    Tensor scaled = div(params.theta, sqrt(params.eta));
    return PhaseState{slice(scaled, -1, 0, d / 2), slice(scaled, -1, d / 2, d)};
}

PhaseState symplectic_step(const PhaseState& state, const Tensor& w_v, const Tensor& dt, SymplecticVariant variant) {
    if (state.q.shape() != state.p.shape()) throw ShapeError("symplectic_step: q and p shapes differ");
    Tensor force = ad::tanh(nn::linear(state.q, transpose(w_v), nullptr));
    Tensor p_next = sub(state.p, mul(dt, force));
    const Tensor& momentum = variant == SymplecticVariant::symplectic ? p_next : state.p;
    Tensor q_next = add(state.q, mul(dt, momentum));
    return PhaseState{q_next, p_next};
}

Tensor residual_enhance(const Tensor& edges, const PhaseState& phase, double alpha_res) {
    Tensor state = concat({phase.q, phase.p}, -1);
    if (state.shape() != edges.shape()) {
        throw ShapeError("residual_enhance: phase width does not match edges " + shape_string(edges.shape()));
    }
    return layer_norm(add(edges, scale(state, alpha_res)));
}

Tensor edge_to_node_aggregate(const Tensor& edges) {
    if (edges.rank() != 3 || edges.dim(0) != edges.dim(1)) {
        throw ShapeError("edge_to_node_aggregate: expected [N, N, D], got " + shape_string(edges.shape()));
    }
    return sum(mul(softmax(edges, 1), edges), 1);
}

Tensor isre_forward(const Tensor& features, const Tensor& offsets, const IsreWeights& weights,
                    const IsreConfig& config) {
    Tensor edges = fuse_edge_features(features, offsets, weights.edge);
    NaturalParams natural = info_geometry_project(edges, weights.w_eta);
    PhaseState phase = split_phase(natural);
    Tensor dt = softplus(weights.dt_raw);
    PhaseState evolved = symplectic_step(phase, weights.w_v, dt, config.variant);
    return edge_to_node_aggregate(residual_enhance(edges, evolved, config.alpha_res));
}

}  // namespace symploc::relation
