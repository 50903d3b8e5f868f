#pragma once

#include <string>
#include <vector>

// Self-contained numerical suites shared by `symploc verify`,
// `symploc grad-check` and the acceptance runner.
namespace symploc::checks {

struct Check {
    std::string name;
    bool passed = false;
    double worst = 0.0;      // largest observed violation
    double tolerance = 0.0;  // bound it was compared against
    std::string detail;
};

struct SuiteResult {
    std::string name;
    std::vector<Check> checks;
    double seconds = 0.0;
    bool passed() const;
};

// Reverse mode against central differences (h = 1e-5, relative error 1e-4)
// for every primitive, every module operation and each full branch loss at
// D = 8, N_s = 4, B = 2.
SuiteResult gradient_suite();

SuiteResult hyperbolic_suite();
SuiteResult symplectic_suite();
SuiteResult spectral_suite();
SuiteResult permutation_suite();
SuiteResult loss_suite();

// The five invariant suites above, in that order.
std::vector<SuiteResult> invariant_suites();

// "PASS name (worst <= tol)" style lines, one per check.
std::string format_suite(const SuiteResult& suite);

}  // namespace symploc::checks
