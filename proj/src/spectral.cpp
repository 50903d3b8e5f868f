#include "symploc/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace symploc::spectral {

using namespace symploc::ad;

namespace {

Tensor pairwise_sq_dist(const Tensor& x) {
    std::size_t n = x.dim(0);
    std::vector<std::size_t> first(n * n), second(n * n);
    for (std::size_t i = 0; i < n * n; ++i) {
        first[i] = i / n;
        second[i] = i % n;
    }
    Tensor diff = sub(index_select(x, 0, first), index_select(x, 0, second));
    return reshape(sum(square(diff), 1), {n, n});
}

Tensor entry(const Tensor& m, std::size_t r, std::size_t c) { return slice(slice(m, 0, r, r + 1), 1, c, c + 1); }

double inverse_softplus(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

// One GRU direction over rows of `xw` (inputs already multiplied by W and
// biased, [N, 3H]); returns the hidden state after each step in visit order.
std::vector<Tensor> gru_pass(const ParamView& p, const std::string& prefix, const Tensor& xw, bool reverse) {
    std::size_t n = xw.dim(0);
    std::size_t h = xw.dim(1) / 3;
    Tensor u_zr = p(prefix + ".u_zr");
    Tensor u_h = p(prefix + ".u_h");
    Tensor state({1, h}, 0.0);
    std::vector<Tensor> states(n);
    for (std::size_t s = 0; s < n; ++s) {
        std::size_t row = reverse ? n - 1 - s : s;
        Tensor in = slice(xw, 0, row, row + 1);
        Tensor zr = sigmoid(add(slice(in, 1, 0, 2 * h), matmul(state, u_zr)));
        Tensor z = slice(zr, 1, 0, h);
        Tensor r = slice(zr, 1, h, 2 * h);
        Tensor cand = ad::tanh(add(slice(in, 1, 2 * h, 3 * h), matmul(mul(r, state), u_h)));
        state = add(state, mul(z, sub(cand, state)));
        states[row] = state;
    }
    return states;
}

Tensor encoder_block(const ParamView& p, const std::string& prefix, const Tensor& x) {
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(x.dim(1)));
    Tensor q = nn::linear(p, prefix + ".q", x);
    Tensor k = nn::linear(p, prefix + ".k", x);
    Tensor v = nn::linear(p, prefix + ".v", x);
    Tensor attn = matmul(softmax(scale(matmul(q, transpose(k)), inv_sqrt), 1), v);
    Tensor x1 = layer_norm(add(x, nn::linear(p, prefix + ".o", attn)));
    return layer_norm(add(x1, nn::mlp(p, prefix + ".ffn", x1)));
}

}  // namespace

SimilarityGraph build_similarity_graph(const Tensor& x, const Tensor& tau) {
    if (x.rank() != 2 || x.dim(0) == 0) throw ShapeError("build_similarity_graph: expected [N, D] features");
    if (tau.size() != 1 || !(tau.item() > 0.0)) throw DomainError("build_similarity_graph: tau must be positive");
    std::size_t n = x.dim(0);
    Tensor a = add(ad::exp(neg(div(pairwise_sq_dist(x), tau))), Tensor::identity(n));
    Tensor a_hat = div(a, shift(sum(a, 1, true), kGraphEps));
    return SimilarityGraph{a, a_hat};
}

Tensor scaled_laplacian(const SimilarityGraph& graph) {
    const Tensor& a_hat = graph.a_hat;
    std::size_t n = a_hat.dim(0);
    Tensor degree = sum(a_hat, 1, true);
    for (double d : degree.data()) {
        if (!(d > 0.0)) throw DomainError("scaled_laplacian: zero degree row");
    }
    // sqrt(d_m d_n) rather than sqrt(d_m) sqrt(d_n): a single node gives exactly L = 0.
    Tensor norm_a = div(a_hat, sqrt(matmul(degree, transpose(degree))));
    Tensor lap = sub(Tensor::identity(n), norm_a);
    Tensor peak = max(max(maximum(lap, neg(lap)), 1), 0);
    return div(lap, shift(peak, kGraphEps));
}

std::array<Tensor, 3> chebyshev_filter_bank(const Tensor& laplacian, const Tensor& x, const Tensor& beta) {
    if (beta.rank() != 2 || beta.dim(0) != 3 || beta.dim(1) == 0) {
        throw ShapeError("chebyshev_filter_bank: beta must be [3, K], got " + shape_string(beta.shape()));
    }
    if (laplacian.rank() != 2 || laplacian.dim(0) != laplacian.dim(1) || laplacian.dim(1) != x.dim(0)) {
        throw ShapeError("chebyshev_filter_bank: laplacian does not match features");
    }
    std::size_t order = beta.dim(1);
    std::vector<Tensor> terms;
    terms.reserve(order);
    terms.push_back(x);
    if (order > 1) terms.push_back(matmul(laplacian, x));
    for (std::size_t k = 2; k < order; ++k) {
        terms.push_back(sub(scale(matmul(laplacian, terms[k - 1]), 2.0), terms[k - 2]));
    }
    Tensor coeff = softmax(beta, 1);
    std::array<Tensor, 3> out;
    for (std::size_t b = 0; b < 3; ++b) {
        Tensor acc = mul(entry(coeff, b, 0), terms[0]);
        for (std::size_t k = 1; k < order; ++k) acc = add(acc, mul(entry(coeff, b, k), terms[k]));
        out[b] = acc;
    }
    return out;
}

TripleAttention triple_cross_attention(const Tensor& y1, const Tensor& y2, const Tensor& y3) {
    if (y1.shape() != y3.shape() || y2.shape() != y3.shape() || y3.rank() != 2) {
        throw ShapeError("triple_cross_attention: inputs must share an [N, D] shape");
    }
    std::size_t n = y3.dim(0);
    double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(y3.dim(1)));
    Tensor omega1 = softmax(scale(matmul(y3, transpose(y1)), inv_sqrt), 1);
    Tensor omega2 = softmax(scale(matmul(y3, transpose(y2)), inv_sqrt), 1);
    Tensor prod = mul(omega1, omega2);
    Tensor rows = sum(prod, 1, true);

    // Rows whose product underflowed to zero fall back to uniform weights.
    std::vector<double> dead(n, 0.0);
    bool any_dead = false;
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i] == 0.0) {
            dead[i] = 1.0;
            any_dead = true;
        }
    }
    if (any_dead) {
        Tensor mask({n, 1}, dead);
        prod = add(prod, scale(mask, 1.0 / static_cast<double>(n)));
        rows = add(rows, mask);
    }
    Tensor combined = div(prod, rows);
    return TripleAttention{matmul(combined, y3), combined};
}

void add_point_global_params(ParamStore& store, Rng& rng, const std::string& prefix, const SmtConfig& config) {
    std::size_t d = config.dim;
    store.add(prefix + ".tau_raw", Tensor::scalar(inverse_softplus(static_cast<double>(d))));
    store.add(prefix + ".beta", nn::normal(rng, {3, config.order}, 0.1));
    for (const char* dir : {".gru_f", ".gru_b"}) {
        std::string g = prefix + dir;
        nn::add_linear(store, rng, g + ".in", d, 3 * d);
        store.add(g + ".u_zr", nn::glorot(rng, d, 2 * d));
        store.add(g + ".u_h", nn::glorot(rng, d, d));
    }
    std::string e = prefix + ".enc";
    for (const char* w : {".q", ".k", ".v", ".o"}) nn::add_linear(store, rng, e + w, 2 * d, 2 * d);
    nn::add_mlp(store, rng, e + ".ffn", 2 * d, 2 * d, 2 * d);
}

void add_language_pool_params(ParamStore& store, Rng& rng, const std::string& prefix, std::size_t dim) {
    nn::add_linear(store, rng, prefix + ".proj", dim, dim, false);
    store.add(prefix + ".score", nn::glorot(rng, dim, 1));
}

TripleAttention smt_features(const ParamView& p, const std::string& prefix, const Tensor& x) {
    SimilarityGraph graph = build_similarity_graph(x, softplus(p(prefix + ".tau_raw")));
    Tensor lap = scaled_laplacian(graph);
    auto ys = chebyshev_filter_bank(lap, x, p(prefix + ".beta"));
    return triple_cross_attention(ys[0], ys[1], ys[2]);
}

Tensor encode_point_global(const ParamView& p, const std::string& prefix, const Tensor& kappa) {
    std::size_t n = kappa.dim(0);
    std::size_t h = kappa.dim(1);
    auto fwd = gru_pass(p, prefix + ".gru_f", nn::linear(p, prefix + ".gru_f.in", kappa), false);
    auto bwd = gru_pass(p, prefix + ".gru_b", nn::linear(p, prefix + ".gru_b.in", kappa), true);
    std::vector<Tensor> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i] = concat({fwd[i], bwd[i]}, 1);
    Tensor seq = encoder_block(p, prefix + ".enc", concat(rows, 0));
    // Forward half read at the last step, backward half at the first.
    Tensor final_state = concat({slice(slice(seq, 0, n - 1, n), 1, 0, h), slice(slice(seq, 0, 0, 1), 1, h, 2 * h)}, 1);
    std::vector<std::size_t> stride(h);
    for (std::size_t i = 0; i < h; ++i) stride[i] = 2 * i;
    return index_select(final_state, 1, stride);
}

Tensor point_global_descriptor(const ParamView& p, const std::string& prefix, const Tensor& x,
                               const Tensor& centroids) {
    if (centroids.rank() != 2 || centroids.dim(0) != x.dim(0)) {
        throw ShapeError("point_global_descriptor: one centroid per instance required");
    }
    // Features break exact centroid ties.
    auto order = canonical_order(concat({centroids.detach(), x.detach()}, 1));
    Tensor sorted = index_select(x, 0, order);
    return encode_point_global(p, prefix, smt_features(p, prefix, sorted).kappa);
}

LanguagePool pool_language_global(const ParamView& p, const std::string& prefix, const Tensor& hints) {
    if (hints.rank() != 2 || hints.dim(0) == 0) throw ShapeError("pool_language_global: expected [N_q, D] hints");
    Tensor sorted = index_select(hints, 0, canonical_order(hints.detach()));
    Tensor scores = matmul(ad::tanh(nn::linear(p, prefix + ".proj", sorted)), p(prefix + ".score"));
    Tensor weights = softmax(scores, 0);
    return LanguagePool{sum(mul(weights, sorted), 0, true), weights};
}

std::vector<std::size_t> canonical_order(const Tensor& rows) {
    if (rows.rank() != 2) throw ShapeError("canonical_order: expected a matrix");
    std::size_t n = rows.dim(0), w = rows.dim(1);
    const double* d = rows.ptr();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return std::lexicographical_compare(d + a * w, d + a * w + w, d + b * w, d + b * w + w);
    });
    return idx;
}

}  // namespace symploc::spectral
