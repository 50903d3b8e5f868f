#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include "symploc/nn.hpp"

namespace symploc::spectral {

using ad::Tensor;

inline constexpr double kGraphEps = 1e-8;

struct SimilarityGraph {
    Tensor a;      // [N, N], exp(-|x_m - x_n|^2 / tau) + delta_mn
    Tensor a_hat;  // row-normalized a
};

SimilarityGraph build_similarity_graph(const Tensor& x, const Tensor& tau);

// I - D^{-1/2} A_hat D^{-1/2}, divided by its largest absolute entry (+eps).
Tensor scaled_laplacian(const SimilarityGraph& graph);

// Y^(b) = sum_k softmax(beta_b)_k T_k(L) X for the three rows of beta [3, K].
// T_k(L) X is built by the three-term recurrence applied to X directly.
std::array<Tensor, 3> chebyshev_filter_bank(const Tensor& laplacian, const Tensor& x, const Tensor& beta);

struct TripleAttention {
    Tensor kappa;     // [N, D]
    Tensor combined;  // [N, N], rows sum to one
};

TripleAttention triple_cross_attention(const Tensor& y1, const Tensor& y2, const Tensor& y3);

struct SmtConfig {
    std::size_t dim = 32;
    std::size_t order = 4;  // K
};

// Parameters under `prefix`: tau_raw, beta, the bidirectional GRU and one
// encoder block over the 2D-wide sequence.
void add_point_global_params(ParamStore& store, Rng& rng, const std::string& prefix, const SmtConfig& config);
void add_language_pool_params(ParamStore& store, Rng& rng, const std::string& prefix, std::size_t dim);

// Graph, filter bank and triple attention on instance features [N, D].
TripleAttention smt_features(const ParamView& p, const std::string& prefix, const Tensor& x);

// BiGRU + encoder block over kappa rows in the given order, final states
// concatenated and stride-2 sampled to [1, D].
Tensor encode_point_global(const ParamView& p, const std::string& prefix, const Tensor& kappa);

// Full point-side descriptor. Rows of x are first put in canonical order of
// their centroids so the sequence models see a permutation-free input.
Tensor point_global_descriptor(const ParamView& p, const std::string& prefix, const Tensor& x,
                               const Tensor& centroids);

struct LanguagePool {
    Tensor descriptor;  // [1, D]
    Tensor weights;     // [N_q, 1]
};

LanguagePool pool_language_global(const ParamView& p, const std::string& prefix, const Tensor& hints);

// Row order sorting rows lexicographically by all columns; ties keep the
// original order.
std::vector<std::size_t> canonical_order(const Tensor& rows);

}  // namespace symploc::spectral
