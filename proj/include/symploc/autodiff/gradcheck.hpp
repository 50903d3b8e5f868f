#pragma once

#include <functional>
#include <vector>

#include "symploc/autodiff/tensor.hpp"

namespace symploc::ad {

// Receives one tensor per parameter (tape-bound for the analytic pass,
// plain for the perturbed evaluations) and returns a scalar.
using ScalarFn = std::function<Tensor(const std::vector<Tensor>& params)>;

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t worst_param = 0;
    std::size_t worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t checked = 0;
};

// Central differences against reverse mode. Error per coordinate is
// |g_ad - g_fd| / max(1, |g_ad|, |g_fd|).
GradCheckResult finite_difference_check(const ScalarFn& f, const std::vector<Tensor>& params, double h = 1e-5);

GradCheckResult finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& theta,
                                        double h = 1e-5);

}  // namespace symploc::ad
