#include "symploc/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace symploc::ad {
namespace {

Tape* common_tape(std::initializer_list<const Tensor*> inputs) {
    Tape* tape = nullptr;
    for (const Tensor* t : inputs) {
        if (!t->requires_grad()) continue;
        if (tape && tape != t->tape()) throw std::logic_error("inputs are recorded on different tapes");
        tape = t->tape();
    }
    return tape;
}

Tape* common_tape(const std::vector<Tensor>& inputs) {
    Tape* tape = nullptr;
    for (const Tensor& t : inputs) {
        if (!t.requires_grad()) continue;
        if (tape && tape != t.tape()) throw std::logic_error("inputs are recorded on different tapes");
        tape = t.tape();
    }
    return tape;
}

void check_finite(const std::vector<double>& data, const char* op) {
    for (double v : data) {
        if (!std::isfinite(v)) throw NonFiniteError(std::string(op) + ": non-finite output");
    }
}

Tensor finish(const char* op, Tape* tape, Shape shape, std::vector<double> data, Tape::BackwardFn backward) {
    check_finite(data, op);
    if (!tape) return Tensor(std::move(shape), std::move(data));
    return tape->record(std::move(shape), std::move(data), std::move(backward));
}

std::size_t resolve_axis(int axis, std::size_t rank, const char* op) {
    int r = static_cast<int>(rank);
    int a = axis < 0 ? axis + r : axis;
    if (a < 0 || a >= r) throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) + " out of range");
    return static_cast<std::size_t>(a);
}

// [outer, n, inner] view of a tensor around one axis.
struct AxisView {
    std::size_t outer = 1, n = 1, inner = 1;
};

AxisView axis_view(const Shape& shape, std::size_t axis) {
    AxisView v;
    for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
    v.n = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
    return v;
}

Shape reduced_shape(const Shape& shape, std::size_t axis, std::size_t new_len, bool keepdim) {
    Shape out;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i == axis) {
            if (keepdim || new_len != 1) out.push_back(new_len);
        } else {
            out.push_back(shape[i]);
        }
    }
    return out;
}

// Per-element source offsets for a broadcast binary op.
struct Broadcast {
    Shape shape;
    std::vector<std::size_t> ia, ib;
};

Broadcast broadcast(const Shape& sa, const Shape& sb, const char* op) {
    std::size_t rank = std::max(sa.size(), sb.size());
    Shape out(rank);
    std::vector<std::size_t> da(rank, 1), db(rank, 1);
    for (std::size_t i = 0; i < rank; ++i) {
        if (i + sa.size() >= rank) da[i] = sa[i + sa.size() - rank];
        if (i + sb.size() >= rank) db[i] = sb[i + sb.size() - rank];
        if (da[i] != db[i] && da[i] != 1 && db[i] != 1) {
            throw ShapeError(std::string(op) + ": cannot broadcast " + shape_string(sa) + " with " + shape_string(sb));
        }
        out[i] = std::max(da[i], db[i]);
        if (da[i] == 0 || db[i] == 0) out[i] = 0;
    }
    std::vector<std::size_t> stride_a(rank, 0), stride_b(rank, 0);
    std::size_t acc_a = 1, acc_b = 1;
    for (std::size_t i = rank; i-- > 0;) {
        stride_a[i] = da[i] == 1 ? 0 : acc_a;
        stride_b[i] = db[i] == 1 ? 0 : acc_b;
        acc_a *= da[i];
        acc_b *= db[i];
    }
    Broadcast plan;
    plan.shape = out;
    std::size_t total = shape_size(out);
    plan.ia.resize(total);
    plan.ib.resize(total);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t f = 0; f < total; ++f) {
        plan.ia[f] = oa;
        plan.ib[f] = ob;
        for (std::size_t d = rank; d-- > 0;) {
            if (++idx[d] < out[d]) {
                oa += stride_a[d];
                ob += stride_b[d];
                break;
            }
            oa -= stride_a[d] * (out[d] - 1);
            ob -= stride_b[d] * (out[d] - 1);
            idx[d] = 0;
        }
    }
    return plan;
}

// f(x, y) -> z; d(x, y, z) -> {dz/dx, dz/dy}.
template <class F, class D>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, D d) {
    Tape* tape = common_tape({&a, &b});
    const double* pa = a.ptr();
    const double* pb = b.ptr();

    if (a.shape() == b.shape()) {
        std::size_t n = a.size();
        std::vector<double> out(n);
        for (std::size_t i = 0; i < n; ++i) out[i] = f(pa[i], pb[i]);
        Tape::BackwardFn back;
        if (tape) {
            back = [a, b, d, z = out](std::span<const double> g, Tape& t) {
                const double* xa = a.ptr();
                const double* xb = b.ptr();
                std::span<double> ga, gb;
                if (a.requires_grad()) ga = t.grad_buffer(a);
                if (b.requires_grad()) gb = t.grad_buffer(b);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (g[i] == 0.0) continue;
                    auto [dx, dy] = d(xa[i], xb[i], z[i]);
                    if (!ga.empty()) ga[i] += g[i] * dx;
                    if (!gb.empty()) gb[i] += g[i] * dy;
                }
            };
        }
        return finish(op, tape, a.shape(), std::move(out), std::move(back));
    }

    auto plan = std::make_shared<Broadcast>(broadcast(a.shape(), b.shape(), op));
    std::size_t n = plan->ia.size();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(pa[plan->ia[i]], pb[plan->ib[i]]);
    Tape::BackwardFn back;
    if (tape) {
        back = [a, b, d, plan, z = out](std::span<const double> g, Tape& t) {
            const double* xa = a.ptr();
            const double* xb = b.ptr();
            std::span<double> ga, gb;
            if (a.requires_grad()) ga = t.grad_buffer(a);
            if (b.requires_grad()) gb = t.grad_buffer(b);
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (g[i] == 0.0) continue;
                std::size_t ja = plan->ia[i], jb = plan->ib[i];
                auto [dx, dy] = d(xa[ja], xb[jb], z[i]);
                if (!ga.empty()) ga[ja] += g[i] * dx;
                if (!gb.empty()) gb[jb] += g[i] * dy;
            }
        };
    }
    Shape shape = plan->shape;
    return finish(op, tape, std::move(shape), std::move(out), std::move(back));
}

// f(x) -> y; d(x, y) -> dy/dx.
template <class F, class D>
Tensor unary(const char* op, const Tensor& a, F f, D d) {
    Tape* tape = a.tape();
    std::size_t n = a.size();
    const double* pa = a.ptr();
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = f(pa[i]);
    Tape::BackwardFn back;
    if (tape) {
        back = [a, d, y = out](std::span<const double> g, Tape& t) {
            auto ga = t.grad_buffer(a);
            const double* x = a.ptr();
            for (std::size_t i = 0; i < g.size(); ++i) {
                if (g[i] != 0.0) ga[i] += g[i] * d(x[i], y[i]);
            }
        };
    }
    return finish(op, tape, a.shape(), std::move(out), std::move(back));
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

struct Partials {
    double dx, dy;
};

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double, double, double) { return Partials{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double, double, double) { return Partials{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double x, double y, double) { return Partials{y, x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    return binary(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double, double y, double z) { return Partials{1.0 / y, -z / y}; });
}

Tensor pow(const Tensor& a, const Tensor& b) {
    for (double v : a.data()) {
        if (v < 0.0) throw DomainError("pow: negative base");
    }
    return binary(
        "pow", a, b, [](double x, double y) { return x == 0.0 ? 0.0 : std::pow(x, y); },
        [](double x, double y, double z) {
            if (x == 0.0) return Partials{0.0, 0.0};
            return Partials{y * z / x, z * std::log(x)};
        });
}

Tensor maximum(const Tensor& a, const Tensor& b) {
    return binary(
        "maximum", a, b, [](double x, double y) { return x >= y ? x : y; },
        [](double x, double y, double) { return x >= y ? Partials{1.0, 0.0} : Partials{0.0, 1.0}; });
}

Tensor minimum(const Tensor& a, const Tensor& b) {
    return binary(
        "minimum", a, b, [](double x, double y) { return x <= y ? x : y; },
        [](double x, double y, double) { return x <= y ? Partials{1.0, 0.0} : Partials{0.0, 1.0}; });
}

Tensor scale(const Tensor& a, double s) {
    return unary(
        "scale", a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor shift(const Tensor& a, double s) {
    return unary(
        "shift", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor neg(const Tensor& a) {
    return unary(
        "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor tanh(const Tensor& a) {
    return unary(
        "tanh", a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
    return unary(
        "sigmoid", a, [](double x) { return stable_sigmoid(x); }, [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor& a) {
    return unary(
        "softplus", a, [](double x) { return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0); },
        [](double x, double) { return stable_sigmoid(x); });
}

Tensor exp(const Tensor& a) {
    return unary(
        "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    for (double v : a.data()) {
        if (!(v > 0.0)) throw DomainError("log: argument must be positive");
    }
    return unary(
        "log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor cosh(const Tensor& a) {
    return unary(
        "cosh", a, [](double x) { return std::cosh(x); }, [](double x, double) { return std::sinh(x); });
}

Tensor sinh(const Tensor& a) {
    return unary(
        "sinh", a, [](double x) { return std::sinh(x); }, [](double x, double) { return std::cosh(x); });
}

Tensor atanh(const Tensor& a) {
    for (double v : a.data()) {
        if (!(v > -1.0 && v < 1.0)) throw DomainError("atanh: argument must lie in (-1, 1)");
    }
    return unary(
        "atanh", a, [](double x) { return std::atanh(x); }, [](double x, double) { return 1.0 / (1.0 - x * x); });
}

Tensor sqrt(const Tensor& a) {
    for (double v : a.data()) {
        if (!(v >= 0.0)) throw DomainError("sqrt: negative argument");
    }
    return unary(
        "sqrt", a, [](double x) { return std::sqrt(x); }, [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor square(const Tensor& a) {
    return unary(
        "square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
    if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
    return unary(
        "clamp", a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw ShapeError("matmul: incompatible shapes " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    std::size_t n = a.dim(0), k = a.dim(1), m = b.dim(1);
    std::vector<double> out(n * m, 0.0);
    const double* pa = a.ptr();
    const double* pb = b.ptr();
    for (std::size_t i = 0; i < n; ++i) {
        double* row = out.data() + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            double v = pa[i * k + p];
            if (v == 0.0) continue;
            const double* brow = pb + p * m;
            for (std::size_t j = 0; j < m; ++j) row[j] += v * brow[j];
        }
    }
    Tape* tape = common_tape({&a, &b});
    Tape::BackwardFn back;
    if (tape) {
        back = [a, b, n, k, m](std::span<const double> g, Tape& t) {
            const double* pa = a.ptr();
            const double* pb = b.ptr();
            if (a.requires_grad()) {
                auto ga = t.grad_buffer(a);
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        double acc = 0.0;
                        for (std::size_t j = 0; j < m; ++j) acc += g[i * m + j] * pb[p * m + j];
                        ga[i * k + p] += acc;
                    }
                }
            }
            if (b.requires_grad()) {
                auto gb = t.grad_buffer(b);
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t p = 0; p < k; ++p) {
                        double v = pa[i * k + p];
                        if (v == 0.0) continue;
                        for (std::size_t j = 0; j < m; ++j) gb[p * m + j] += v * g[i * m + j];
                    }
                }
            }
        };
    }
    return finish("matmul", tape, Shape{n, m}, std::move(out), std::move(back));
}

Tensor transpose(const Tensor& a) {
    if (a.rank() != 2) throw ShapeError("transpose: rank-2 tensor required, got " + shape_string(a.shape()));
    std::size_t r = a.dim(0), c = a.dim(1);
    std::vector<double> out(r * c);
    const double* p = a.ptr();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = p[i * c + j];
    Tape::BackwardFn back;
    if (a.requires_grad()) {
        back = [a, r, c](std::span<const double> g, Tape& t) {
            auto ga = t.grad_buffer(a);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
        };
    }
    return finish("transpose", a.tape(), Shape{c, r}, std::move(out), std::move(back));
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_size(shape) != a.size()) {
        throw ShapeError("reshape: " + shape_string(a.shape()) + " to " + shape_string(shape));
    }
    Tape::BackwardFn back;
    if (a.requires_grad()) {
        back = [a](std::span<const double> g, Tape& t) {
            auto ga = t.grad_buffer(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        };
    }
    return finish("reshape", a.tape(), std::move(shape), a.to_vector(), std::move(back));
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    std::size_t ax = resolve_axis(axis, s0.size(), "concat");
    AxisView v0 = axis_view(s0, ax);
    std::vector<std::size_t> lens;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.rank() != s0.size()) throw ShapeError("concat: rank mismatch");
        for (std::size_t i = 0; i < s0.size(); ++i) {
            if (i != ax && p.shape()[i] != s0[i]) {
                throw ShapeError("concat: shape mismatch " + shape_string(p.shape()) + " vs " + shape_string(s0));
            }
        }
        lens.push_back(p.shape()[ax]);
        total += p.shape()[ax];
    }
    Shape out_shape = s0;
    out_shape[ax] = total;
    std::vector<double> out(v0.outer * total * v0.inner);
    std::size_t offset = 0;
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        const double* src = parts[pi].ptr();
        std::size_t len = lens[pi] * v0.inner;
        for (std::size_t o = 0; o < v0.outer; ++o) {
            std::copy(src + o * len, src + (o + 1) * len, out.data() + o * total * v0.inner + offset * v0.inner);
        }
        offset += lens[pi];
    }
    Tape* tape = common_tape(parts);
    Tape::BackwardFn back;
    if (tape) {
        back = [parts, lens, total, v0](std::span<const double> g, Tape& t) {
            std::size_t offset = 0;
            for (std::size_t pi = 0; pi < parts.size(); ++pi) {
                std::size_t len = lens[pi] * v0.inner;
                if (parts[pi].requires_grad()) {
                    auto gp = t.grad_buffer(parts[pi]);
                    for (std::size_t o = 0; o < v0.outer; ++o) {
                        const double* src = g.data() + o * total * v0.inner + offset * v0.inner;
                        for (std::size_t i = 0; i < len; ++i) gp[o * len + i] += src[i];
                    }
                }
                offset += lens[pi];
            }
        };
    }
    return finish("concat", tape, std::move(out_shape), std::move(out), std::move(back));
}

Tensor index_select(const Tensor& a, int axis, const std::vector<std::size_t>& indices) {
    std::size_t ax = resolve_axis(axis, a.rank(), "index_select");
    AxisView v = axis_view(a.shape(), ax);
    for (auto i : indices) {
        if (i >= v.n) throw ShapeError("index_select: index out of range");
    }
    std::size_t m = indices.size();
    Shape out_shape = a.shape();
    out_shape[ax] = m;
    std::vector<double> out(v.outer * m * v.inner);
    const double* src = a.ptr();
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t j = 0; j < m; ++j)
            std::copy_n(src + (o * v.n + indices[j]) * v.inner, v.inner, out.data() + (o * m + j) * v.inner);
    Tape::BackwardFn back;
    if (a.requires_grad()) {
        back = [a, indices, v, m](std::span<const double> g, Tape& t) {
            auto ga = t.grad_buffer(a);
            for (std::size_t o = 0; o < v.outer; ++o)
                for (std::size_t j = 0; j < m; ++j) {
                    const double* gs = g.data() + (o * m + j) * v.inner;
                    double* gd = ga.data() + (o * v.n + indices[j]) * v.inner;
                    for (std::size_t i = 0; i < v.inner; ++i) gd[i] += gs[i];
                }
        };
    }
    return finish("index_select", a.tape(), std::move(out_shape), std::move(out), std::move(back));
}

Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end) {
    std::size_t ax = resolve_axis(axis, a.rank(), "slice");
    if (begin > end || end > a.shape()[ax]) throw ShapeError("slice: range out of bounds");
    std::vector<std::size_t> idx(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    return index_select(a, axis, idx);
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    Tape::BackwardFn back;
    if (a.requires_grad()) {
        back = [a](std::span<const double> g, Tape& t) {
            auto ga = t.grad_buffer(a);
            for (auto& x : ga) x += g[0];
        };
    }
    return finish("sum", a.tape(), Shape{}, std::vector<double>{s}, std::move(back));
}

Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw ShapeError("mean of empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

Tensor sum(const Tensor& a, int axis, bool keepdim) {
    std::size_t ax = resolve_axis(axis, a.rank(), "sum");
    AxisView v = axis_view(a.shape(), ax);
    std::vector<double> out(v.outer * v.inner, 0.0);
    const double* p = a.ptr();
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t k = 0; k < v.n; ++k)
            for (std::size_t i = 0; i < v.inner; ++i) out[o * v.inner + i] += p[(o * v.n + k) * v.inner + i];
    Tape::BackwardFn back;
    if (a.requires_grad()) {
        back = [a, v](std::span<const double> g, Tape& t) {
            auto ga = t.grad_buffer(a);
            for (std::size_t o = 0; o < v.outer; ++o)
                for (std::size_t k = 0; k < v.n; ++k)
                    for (std::size_t i = 0; i < v.inner; ++i) ga[(o * v.n + k) * v.inner + i] += g[o * v.inner + i];
        };
    }
    return finish("sum", a.tape(), reduced_shape(a.shape(), ax, 1, keepdim), std::move(out), std::move(back));
}

Tensor mean(const Tensor& a, int axis, bool keepdim) {
    std::size_t ax = resolve_axis(axis, a.rank(), "mean");
    if (a.shape()[ax] == 0) throw ShapeError("mean over empty axis");
    return scale(sum(a, axis, keepdim), 1.0 / static_cast<double>(a.shape()[ax]));
}

Tensor max(const Tensor& a, int axis, bool keepdim) {
    std::size_t ax = resolve_axis(axis, a.rank(), "max");
    Tensor r = segment_max(a, axis, {a.shape()[ax]});
    if (keepdim) return r;
    return reshape(r, reduced_shape(a.shape(), ax, 1, false));
}

Tensor norm(const Tensor& a, int axis, bool keepdim) {
    std::size_t ax = resolve_axis(axis, a.rank(), "norm");
    AxisView v = axis_view(a.shape(), ax);
    std::vector<double> out(v.outer * v.inner, 0.0);
    const double* p = a.ptr();
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t k = 0; k < v.n; ++k)
            for (std::size_t i = 0; i < v.inner; ++i) {
                double x = p[(o * v.n + k) * v.inner + i];
                out[o * v.inner + i] += x * x;
            }
    for (auto& x : out) x = std::sqrt(x);
    Tape::BackwardFn back;
    if (a.requires_grad()) {
        back = [a, v, y = out](std::span<const double> g, Tape& t) {
            auto ga = t.grad_buffer(a);
            const double* p = a.ptr();
            for (std::size_t o = 0; o < v.outer; ++o)
                for (std::size_t i = 0; i < v.inner; ++i) {
                    double n = y[o * v.inner + i];
                    if (n == 0.0) continue;
                    double gi = g[o * v.inner + i] / n;
                    for (std::size_t k = 0; k < v.n; ++k) {
                        std::size_t f = (o * v.n + k) * v.inner + i;
                        ga[f] += gi * p[f];
                    }
                }
        };
    }
    return finish("norm", a.tape(), reduced_shape(a.shape(), ax, 1, keepdim), std::move(out), std::move(back));
}

namespace {

std::vector<std::size_t> segment_starts(const std::vector<std::size_t>& segments, std::size_t n, const char* op) {
    std::vector<std::size_t> starts;
    std::size_t acc = 0;
    for (auto len : segments) {
        if (len == 0) throw ShapeError(std::string(op) + ": empty segment");
        starts.push_back(acc);
        acc += len;
    }
    if (acc != n) throw ShapeError(std::string(op) + ": segment lengths do not cover the axis");
    return starts;
}

}  // namespace

Tensor segment_max(const Tensor& a, int axis, const std::vector<std::size_t>& segments) {
    std::size_t ax = resolve_axis(axis, a.rank(), "segment_max");
    AxisView v = axis_view(a.shape(), ax);
    auto starts = segment_starts(segments, v.n, "segment_max");
    std::size_t s = segments.size();
    std::vector<double> out(v.outer * s * v.inner);
    auto argmax = std::make_shared<std::vector<std::size_t>>(out.size());
    const double* p = a.ptr();
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t j = 0; j < s; ++j)
            for (std::size_t i = 0; i < v.inner; ++i) {
                std::size_t best = (o * v.n + starts[j]) * v.inner + i;
                for (std::size_t k = starts[j] + 1; k < starts[j] + segments[j]; ++k) {
                    std::size_t f = (o * v.n + k) * v.inner + i;
                    if (p[f] > p[best]) best = f;
                }
                std::size_t oi = (o * s + j) * v.inner + i;
                out[oi] = p[best];
                (*argmax)[oi] = best;
            }
    Tape::BackwardFn back;
    if (a.requires_grad()) {
        back = [a, argmax](std::span<const double> g, Tape& t) {
            auto ga = t.grad_buffer(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[(*argmax)[i]] += g[i];
        };
    }
    Shape shape = a.shape();
    shape[ax] = s;
    return finish("segment_max", a.tape(), std::move(shape), std::move(out), std::move(back));
}

Tensor segment_mean(const Tensor& a, int axis, const std::vector<std::size_t>& segments) {
    std::size_t ax = resolve_axis(axis, a.rank(), "segment_mean");
    AxisView v = axis_view(a.shape(), ax);
    auto starts = segment_starts(segments, v.n, "segment_mean");
    std::size_t s = segments.size();
    std::vector<double> out(v.outer * s * v.inner, 0.0);
    const double* p = a.ptr();
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t j = 0; j < s; ++j) {
            double inv = 1.0 / static_cast<double>(segments[j]);
            for (std::size_t i = 0; i < v.inner; ++i) {
                double acc = 0.0;
                for (std::size_t k = starts[j]; k < starts[j] + segments[j]; ++k) acc += p[(o * v.n + k) * v.inner + i];
                out[(o * s + j) * v.inner + i] = acc * inv;
            }
        }
    Tape::BackwardFn back;
    if (a.requires_grad()) {
        back = [a, v, s, starts, segments](std::span<const double> g, Tape& t) {
            auto ga = t.grad_buffer(a);
            for (std::size_t o = 0; o < v.outer; ++o)
                for (std::size_t j = 0; j < s; ++j) {
                    double inv = 1.0 / static_cast<double>(segments[j]);
                    for (std::size_t i = 0; i < v.inner; ++i) {
                        double gi = g[(o * s + j) * v.inner + i] * inv;
                        for (std::size_t k = starts[j]; k < starts[j] + segments[j]; ++k)
                            ga[(o * v.n + k) * v.inner + i] += gi;
                    }
                }
        };
    }
    Shape shape = a.shape();
    shape[ax] = s;
    return finish("segment_mean", a.tape(), std::move(shape), std::move(out), std::move(back));
}

Tensor softmax(const Tensor& a, int axis) {
    std::size_t ax = resolve_axis(axis, a.rank(), "softmax");
    AxisView v = axis_view(a.shape(), ax);
    std::vector<double> out(a.size());
    const double* p = a.ptr();
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i) {
            double m = p[o * v.n * v.inner + i];
            for (std::size_t k = 1; k < v.n; ++k) m = std::max(m, p[(o * v.n + k) * v.inner + i]);
            double z = 0.0;
            for (std::size_t k = 0; k < v.n; ++k) {
                std::size_t f = (o * v.n + k) * v.inner + i;
                out[f] = std::exp(p[f] - m);
                z += out[f];
            }
            for (std::size_t k = 0; k < v.n; ++k) out[(o * v.n + k) * v.inner + i] /= z;
        }
    Tape::BackwardFn back;
    if (a.requires_grad()) {
        back = [a, v, y = out](std::span<const double> g, Tape& t) {
            auto ga = t.grad_buffer(a);
            for (std::size_t o = 0; o < v.outer; ++o)
                for (std::size_t i = 0; i < v.inner; ++i) {
                    double dot = 0.0;
                    for (std::size_t k = 0; k < v.n; ++k) {
                        std::size_t f = (o * v.n + k) * v.inner + i;
                        dot += g[f] * y[f];
                    }
                    for (std::size_t k = 0; k < v.n; ++k) {
                        std::size_t f = (o * v.n + k) * v.inner + i;
                        ga[f] += y[f] * (g[f] - dot);
                    }
                }
        };
    }
    return finish("softmax", a.tape(), a.shape(), std::move(out), std::move(back));
}

Tensor layer_norm(const Tensor& a, double eps) {
    if (a.rank() == 0) throw ShapeError("layer_norm: scalar input");
    std::size_t n = a.shape().back();
    std::size_t rows = n ? a.size() / n : 0;
    std::vector<double> out(a.size());
    auto inv_std = std::make_shared<std::vector<double>>(rows);
    const double* p = a.ptr();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = p + r * n;
        double mu = 0.0;
        for (std::size_t i = 0; i < n; ++i) mu += x[i];
        mu /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t i = 0; i < n; ++i) var += (x[i] - mu) * (x[i] - mu);
        var /= static_cast<double>(n);
        double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[r] = is;
        for (std::size_t i = 0; i < n; ++i) out[r * n + i] = (x[i] - mu) * is;
    }
    Tape::BackwardFn back;
    if (a.requires_grad()) {
        back = [a, n, rows, inv_std, y = out](std::span<const double> g, Tape& t) {
            auto ga = t.grad_buffer(a);
            double nn = static_cast<double>(n);
            for (std::size_t r = 0; r < rows; ++r) {
                double sg = 0.0, sgy = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    sg += g[r * n + i];
                    sgy += g[r * n + i] * y[r * n + i];
                }
                double is = (*inv_std)[r];
                for (std::size_t i = 0; i < n; ++i) {
                    ga[r * n + i] += is / nn * (nn * g[r * n + i] - sg - y[r * n + i] * sgy);
                }
            }
        };
    }
    return finish("layer_norm", a.tape(), a.shape(), std::move(out), std::move(back));
}

Tensor normalize(const Tensor& a, int axis, double tiny) {
    std::size_t ax = resolve_axis(axis, a.rank(), "normalize");
    AxisView v = axis_view(a.shape(), ax);
    std::vector<double> out(a.size(), 0.0);
    auto norms = std::make_shared<std::vector<double>>(v.outer * v.inner, 0.0);
    const double* p = a.ptr();
    for (std::size_t o = 0; o < v.outer; ++o)
        for (std::size_t i = 0; i < v.inner; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < v.n; ++k) {
                double x = p[(o * v.n + k) * v.inner + i];
                s += x * x;
            }
            double nrm = std::sqrt(s);
            (*norms)[o * v.inner + i] = nrm;
            if (nrm < tiny) continue;
            for (std::size_t k = 0; k < v.n; ++k) {
                std::size_t f = (o * v.n + k) * v.inner + i;
                out[f] = p[f] / nrm;
            }
        }
    Tape::BackwardFn back;
    if (a.requires_grad()) {
        back = [a, v, norms, tiny, y = out](std::span<const double> g, Tape& t) {
            auto ga = t.grad_buffer(a);
            for (std::size_t o = 0; o < v.outer; ++o)
                for (std::size_t i = 0; i < v.inner; ++i) {
                    double nrm = (*norms)[o * v.inner + i];
                    if (nrm < tiny) continue;
                    double dot = 0.0;
                    for (std::size_t k = 0; k < v.n; ++k) {
                        std::size_t f = (o * v.n + k) * v.inner + i;
                        dot += g[f] * y[f];
                    }
                    for (std::size_t k = 0; k < v.n; ++k) {
                        std::size_t f = (o * v.n + k) * v.inner + i;
                        ga[f] += (g[f] - y[f] * dot) / nrm;
                    }
                }
        };
    }
    return finish("normalize", a.tape(), a.shape(), std::move(out), std::move(back));
}

}  // namespace symploc::ad
