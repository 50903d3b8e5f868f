#include "symploc/autodiff/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "symploc/autodiff/tape.hpp"

namespace symploc::ad {

GradCheckResult finite_difference_check(const ScalarFn& f, const std::vector<Tensor>& params, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_difference_check: step must be positive");

    Tape tape;
    std::vector<Tensor> bound;
    bound.reserve(params.size());
    for (const auto& p : params) bound.push_back(tape.variable(p.detach()));
    Tensor root = f(bound);
    if (root.size() != 1) throw ShapeError("finite_difference_check: f must return a scalar");
    tape.backward(root);

    std::vector<Tensor> plain;
    for (const auto& p : params) plain.push_back(p.detach());

    auto eval = [&](std::size_t which, std::size_t index, double value) {
        std::vector<double> data = plain[which].to_vector();
        data[index] = value;
        std::vector<Tensor> args = plain;
        args[which] = Tensor(plain[which].shape(), std::move(data));
        double y = f(args).item();
        if (!std::isfinite(y)) throw NonFiniteError("finite_difference_check: f is non-finite at a perturbed point");
        return y;
    };

    GradCheckResult result;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        std::vector<double> g = root.requires_grad() ? tape.grad(bound[pi]) : std::vector<double>(params[pi].size());
        for (std::size_t i = 0; i < params[pi].size(); ++i) {
            double x = plain[pi][i];
            double fd = (eval(pi, i, x + h) - eval(pi, i, x - h)) / (2.0 * h);
            double err = std::abs(g[i] - fd) / std::max({1.0, std::abs(g[i]), std::abs(fd)});
            ++result.checked;
            if (err > result.max_rel_error || result.checked == 1) {
                result.max_rel_error = err;
                result.worst_param = pi;
                result.worst_index = i;
                result.analytic = g[i];
                result.numeric = fd;
            }
        }
    }
    return result;
}

GradCheckResult finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& theta, double h) {
    return finite_difference_check([&](const std::vector<Tensor>& p) { return f(p[0]); }, {theta}, h);
}

}  // namespace symploc::ad
