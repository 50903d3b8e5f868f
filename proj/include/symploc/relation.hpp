#pragma once

#include <cstddef>

#include "symploc/autodiff/ops.hpp"

// Relation-level encoding: pairwise graph construction, the
// information-symplectic relation encoder and edge-to-node aggregation.
// Edge tensors are [N, N, D] with (m, n) addressing the edge from n to m.
namespace symploc::relation {

using ad::Tensor;

enum class SymplecticVariant {
    // p' = p - dt tanh(W q), q' = q + dt p   (pre-update momentum)
    paper_literal,
    // p' = p - dt tanh(W q), q' = q + dt p'  (momentum first, volume preserving)
    symplectic,
};

struct NaturalParams {
    Tensor theta;  // [N, N, D], |theta| < 1
    Tensor eta;    // [N, N, 1], eta >= 1
};

struct PhaseState {
    Tensor q;  // [..., D/2]
    Tensor p;  // [..., D/2]
};

struct EdgeIndex {
    std::size_t m;
    std::size_t n;
};

// Two one-hidden-layer tanh MLPs: MLP_geo over offsets and MLP_fuse over
// [x_m; x_n; MLP_geo(O_mn)].
struct EdgeMlp {
    Tensor geo_w1, geo_b1, geo_w2, geo_b2;
    Tensor fuse_w1, fuse_b1, fuse_w2, fuse_b2;
};

struct IsreWeights {
    EdgeMlp edge;
    Tensor w_eta;   // [D, D]
    Tensor w_v;     // [D/2, D/2]
    Tensor dt_raw;  // scalar; dt = softplus(dt_raw)
};

struct IsreConfig {
    SymplecticVariant variant = SymplecticVariant::paper_literal;
    double alpha_res = 0.1;
};

// O_mn = c_m - c_n for centroids [N, 3].
Tensor build_offset_tensor(const Tensor& centroids);

// O^t_mn = [t_m; t_n] for description features [N, D_t].
Tensor build_text_relation_tensor(const Tensor& features);

Tensor fuse_edge_features(const Tensor& features, const Tensor& offsets, const EdgeMlp& mlp);

// theta = tanh(W_eta E), eta = 1 + 0.1 |E|.
NaturalParams info_geometry_project(const Tensor& edges, const Tensor& w_eta);

// |theta_i - theta_j| / sqrt((eta_i + eta_j) / 2)
double fisher_rao_distance(const NaturalParams& params, EdgeIndex i, EdgeIndex j);

// Precision-scaled split: theta / sqrt(eta) halved along the feature axis.
PhaseState split_phase(const NaturalParams& params);

PhaseState symplectic_step(const PhaseState& state, const Tensor& w_v, const Tensor& dt, SymplecticVariant variant);

// LayerNorm(E + alpha [q'; p'])
Tensor residual_enhance(const Tensor& edges, const PhaseState& phase, double alpha_res);

// x_m[d] = sum_n softmax_n(E_m.[d]) E_mn[d]
Tensor edge_to_node_aggregate(const Tensor& edges);

Tensor isre_forward(const Tensor& features, const Tensor& offsets, const IsreWeights& weights,
                    const IsreConfig& config = {});

}  // namespace symploc::relation
