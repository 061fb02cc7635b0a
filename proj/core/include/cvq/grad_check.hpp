#pragma once

// Central-difference verification of reverse-mode gradients.

#include <functional>
#include <string>

#include "cvq/rng.hpp"
#include "cvq/tensor.hpp"

namespace cvq {

struct GradCheckReport {
    bool pass = false;
    double max_err = 0.0;  // worst |analytic-numeric| / max(|analytic|,|numeric|,1e-6)
    int64_t worst_index = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    int64_t elements_checked = 0;
    std::string note;
};

// Compares the reverse-mode gradient of the scalar f() with central
// differences taken by perturbing `leaf` in place. f must be deterministic
// (verified by evaluating it twice) and must rebuild its graph on every call.
// When 0 < max_elements < leaf size, a random subset of coordinates is
// checked (an Rng is then required).
GradCheckReport finite_difference_check(const std::function<Tensor()>& f, Tensor& leaf,
                                        double eps = 1e-5, double tol = 1e-4,
                                        int64_t max_elements = -1, Rng* rng = nullptr);

}  // namespace cvq
