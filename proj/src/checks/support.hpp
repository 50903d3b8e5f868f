#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "symploc/autodiff/gradcheck.hpp"
#include "symploc/checks.hpp"

namespace symploc::checks::detail {

using ad::Shape;
using ad::Tensor;
using Rng = std::mt19937_64;

inline Tensor uniform(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(ad::shape_size(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

inline Tensor gaussian(Rng& rng, Shape shape, double stddev = 1.0) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(ad::shape_size(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

inline std::string sci(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

// Accumulates the worst value of one named property over many trials.
class Bound {
public:
    Bound(std::string name, double tolerance) : check_{std::move(name), true, 0.0, tolerance, {}} {}

    // NaN counts as a violation and sticks as the worst value.
    void observe(double value, const std::string& where = {}) {
        if (!(value <= check_.worst) && !std::isnan(check_.worst)) {
            check_.worst = value;
            if (!where.empty()) check_.detail = where;
        }
        if (!(value <= check_.tolerance)) check_.passed = false;
    }
    // Pass/fail properties with no magnitude.
    void require(bool ok, const std::string& where = {}) {
        if (!ok) {
            check_.passed = false;
            check_.worst = 1.0;
            if (check_.detail.empty()) check_.detail = where;
        }
    }
    Check done() const { return check_; }

private:
    Check check_;
};

class Stopwatch {
public:
    double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

}  // namespace symploc::checks::detail
