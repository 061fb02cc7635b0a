#pragma once

// Named finite-difference verification suites covering every differentiable
// operation, from single primitives up to the end-to-end training loss.
// Shared by the command-line `grad-check` entry point and the acceptance
// harness.

#include <string>
#include <vector>

namespace cvq {

struct GradSuiteRow {
    std::string suite;
    std::string op;
    bool pass = false;
    long long cases = 0;   // finite-difference probes accumulated for this op
    double max_err = 0.0;  // worst relative error seen
    double tolerance = 0.0;
    std::string note;      // failure details, empty on success
};

// Suite names accepted by run_grad_suite (and the `--module` flag).
std::vector<std::string> grad_suite_names();

// Runs one named suite; throws std::invalid_argument for unknown names.
std::vector<GradSuiteRow> run_grad_suite(const std::string& name, unsigned long long seed);

// Runs every suite in a fixed order.
std::vector<GradSuiteRow> run_all_grad_suites(unsigned long long seed);

bool grad_suites_pass(const std::vector<GradSuiteRow>& rows);

// One line per op plus a summary line.
std::string grad_suite_report(const std::vector<GradSuiteRow>& rows);

}  // namespace cvq
