#include "symploc/losses.hpp"

#include <cmath>

namespace symploc::losses {

using namespace symploc::ad;

namespace {

void require_nonzero_rows(const Tensor& m, const char* what) {
    Tensor n = norm(m, 1);
    for (double v : n.data()) {
        if (v == 0.0) throw DomainError(std::string(what) + ": zero vector in set");
    }
}

Tensor stack(const std::vector<Tensor>& sets, std::vector<std::size_t>& lengths, const char* what) {
    if (sets.empty()) throw ShapeError(std::string(what) + ": no sets");
    lengths.clear();
    for (const auto& s : sets) {
        if (s.rank() != 2 || s.dim(0) == 0) throw ShapeError(std::string(what) + ": each set must be a non-empty matrix");
        require_nonzero_rows(s, what);
        lengths.push_back(s.dim(0));
    }
    return normalize(concat(sets, 0), 1);
}

Tensor clamp_similarity(const Tensor& s) { return clamp(s, kSimilarityFloor, 1.0 - kSimilarityFloor); }

}  // namespace

Tensor set_to_set_lambda(const Tensor& x_set, const Tensor& t_set) {
    if (x_set.rank() != 2 || t_set.rank() != 2 || x_set.dim(1) != t_set.dim(1)) {
        throw ShapeError("set_to_set_lambda: sets must be [N, D] and [M, D]");
    }
    require_nonzero_rows(x_set, "set_to_set_lambda");
    require_nonzero_rows(t_set, "set_to_set_lambda");
    Tensor cos = matmul(normalize(x_set, 1), transpose(normalize(t_set, 1)));
    return mean(max(cos, 1));
}

SetLambdas batch_lambdas(const std::vector<Tensor>& point_sets, const std::vector<Tensor>& text_sets) {
    std::vector<std::size_t> nx, nt;
    Tensor xs = stack(point_sets, nx, "batch_lambdas");
    Tensor ts = stack(text_sets, nt, "batch_lambdas");
    if (xs.dim(1) != ts.dim(1)) throw ShapeError("batch_lambdas: point and text widths differ");
    Tensor cos = matmul(xs, transpose(ts));
    Tensor xt = segment_mean(segment_max(cos, 1, nt), 0, nx);
    Tensor tx = transpose(segment_mean(segment_max(cos, 0, nx), 1, nt));
    return SetLambdas{xt, tx};
}

Tensor bidirectional_similarity(const Tensor& xt, const Tensor& tx, double gamma) {
    if (!(gamma > 0.0)) throw DomainError("bidirectional_similarity: gamma must be positive");
    if (xt.rank() != 2 || xt.dim(0) != xt.dim(1) || tx.shape() != xt.shape()) {
        throw ShapeError("bidirectional_similarity: expected two [B, B] matrices");
    }
    Tensor s = scale(add(softmax(scale(xt, 1.0 / gamma), 1), softmax(scale(tx, 1.0 / gamma), 1)), 0.5);
    return clamp_similarity(s);
}

Tensor global_similarity(const Tensor& p, const Tensor& q, double gamma) {
    if (p.rank() != 2 || p.shape() != q.shape()) throw ShapeError("global_similarity: expected two [B, D] matrices");
    Tensor pn = normalize(p, 1);
    Tensor qn = normalize(q, 1);
    return bidirectional_similarity(matmul(pn, transpose(qn)), matmul(qn, transpose(pn)), gamma);
}

Tensor negative_repulsion_loss(const Tensor& s, const Tensor& overlap, const Tensor& a) {
    if (s.rank() != 2 || s.dim(0) != s.dim(1)) throw ShapeError("negative_repulsion_loss: S must be [B, B]");
    std::size_t b = s.dim(0);
    std::vector<double> mask(b * b, 1.0);
    for (std::size_t i = 0; i < b; ++i) mask[i * b + i] = 0.0;
    Tensor weight = mul(Tensor({b, b}, mask), pow(sub(Tensor::scalar(1.0), overlap), div(Tensor::scalar(1.0), a)));
    Tensor terms = mul(weight, log(sub(Tensor::scalar(1.0), clamp_similarity(s))));
    return scale(sum(terms), -1.0 / static_cast<double>(b));
}

Tensor scale_from_raw(const Tensor& a_raw) { return shift(softplus(a_raw), 1e-3); }

double raw_from_scale(double a) {
    double y = a - 1e-3;
    if (!(y > 0.0)) throw DomainError("raw_from_scale: scale must exceed 1e-3");
    return y > 30.0 ? y : std::log(std::expm1(y));
}

}  // namespace symploc::losses
