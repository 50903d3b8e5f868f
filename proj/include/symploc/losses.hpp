#pragma once

#include <vector>

#include "symploc/autodiff/ops.hpp"

namespace symploc::losses {

using ad::Tensor;

inline constexpr double kSimilarityFloor = 1e-7;

enum class JMode { learnable, iou };

struct LossConfig {
    double gamma = 0.07;
    JMode j_mode = JMode::learnable;
};

// (1/N) sum_m max_j cos(x_m, t_j) as a scalar tensor. Throws DomainError on a
// zero row.
Tensor set_to_set_lambda(const Tensor& x_set, const Tensor& t_set);

struct SetLambdas {
    Tensor xt;  // [P, Q], xt_ij = lambda(X_i -> T_j)
    Tensor tx;  // [Q, P], tx_ij = lambda(T_i -> X_j)
};

// Every point set against every text set in one cosine matrix.
SetLambdas batch_lambdas(const std::vector<Tensor>& point_sets, const std::vector<Tensor>& text_sets);

// 0.5 (softmax_rows(xt / gamma) + softmax_rows(tx / gamma)), clamped into
// (floor, 1 - floor). Both inputs are [B, B].
Tensor bidirectional_similarity(const Tensor& xt, const Tensor& tx, double gamma);

// Same combination over cosine similarities of unit-normalized descriptors.
Tensor global_similarity(const Tensor& p, const Tensor& q, double gamma);

// -(1/B) sum_{i != j} (1 - J_ij)^{1/a} log(1 - S_ij). `overlap` broadcasts
// against S (a scalar for the learnable mode, [B, B] for IoU).
Tensor negative_repulsion_loss(const Tensor& s, const Tensor& overlap, const Tensor& a);

// Learnable scale a = softplus(a_raw) + 1e-3 and its inverse.
Tensor scale_from_raw(const Tensor& a_raw);
double raw_from_scale(double a);

}  // namespace symploc::losses
