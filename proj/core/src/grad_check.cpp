#include "cvq/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cvq {

GradCheckReport finite_difference_check(const std::function<Tensor()>& f, Tensor& leaf,
                                        double eps, double tol, int64_t max_elements, Rng* rng) {
    if (!leaf.requires_grad()) {
        throw std::invalid_argument("finite_difference_check: leaf does not require gradients");
    }

    auto eval = [&]() -> double {
        Tensor y = f();
        if (y.size() != 1) throw std::invalid_argument("finite_difference_check: f must be scalar");
        return y.item();
    };

    GradCheckReport report;
    double base1 = eval();
    double base2 = eval();
    if (base1 != base2) {
        report.pass = false;
        report.note = "f is not deterministic across evaluations";
        return report;
    }

    leaf.zero_grad();
    Tensor y = f();
    if (y.size() != 1) throw std::invalid_argument("finite_difference_check: f must be scalar");
    backward(y);
    Tensor analytic = leaf.grad();
    const std::vector<double>& av = analytic.values();

    std::vector<int64_t> indices;
    int64_t n = leaf.size();
    if (max_elements > 0 && max_elements < n) {
        if (!rng) throw std::invalid_argument("finite_difference_check: subsetting needs an Rng");
        for (int64_t k = 0; k < max_elements; ++k) indices.push_back(rng->uniform_int(static_cast<int>(n)));
        std::sort(indices.begin(), indices.end());
        indices.erase(std::unique(indices.begin(), indices.end()), indices.end());
    } else {
        indices.resize(n);
        for (int64_t i = 0; i < n; ++i) indices[i] = i;
    }

    std::vector<double>& lv = leaf.mutable_values();
    for (int64_t i : indices) {
        const double saved = lv[i];
        lv[i] = saved + eps;
        double up = eval();
        lv[i] = saved - eps;
        double down = eval();
        lv[i] = saved;
        double numeric = (up - down) / (2.0 * eps);
        double err = std::abs(av[i] - numeric) / std::max({std::abs(av[i]), std::abs(numeric), 1e-6});
        if (err > report.max_err) {
            report.max_err = err;
            report.worst_index = i;
            report.analytic_at_worst = av[i];
            report.numeric_at_worst = numeric;
        }
        ++report.elements_checked;
    }
    report.pass = report.max_err <= tol;
    return report;
}

}  // namespace cvq
