#pragma once

#include <functional>
#include <string>
#include <vector>

#include "symcomp/autodiff.hpp"

namespace symcomp {

// loss_fn(true) must build the graph, run backward into `params`, and return
// the loss; loss_fn(false) only evaluates. It must be deterministic in the
// current parameter values (freeze any sampling outside of it).
using LossFn = std::function<double(bool with_grad)>;

struct FdEntry {
    std::string param;
    double max_rel_err = 0.0;
    int64_t worst_index = -1;
    double analytic_at_worst = 0.0;
    double numeric_at_worst = 0.0;
    int64_t kink_count = 0;  // components excluded as non-differentiable points
};

struct FdReport {
    std::vector<FdEntry> entries;
    double max_rel_err = 0.0;
    int64_t kink_count = 0;
    double eps = 0.0, tol = 0.0;
    bool pass = false;

    std::string summary() const;
};

// Central-difference check of every parameter component against the analytic
// gradient. Relative error uses a denominator floor so that parameters with
// (correctly) vanishing gradients do not fail on rounding noise. Components
// where the one-sided derivatives disagree are reported as kinks and excluded
// from pass/fail. Running-stat buffers are snapshotted and restored, so batch
// statistics seen by loss_fn stay consistent even though train-mode BatchNorm
// would otherwise drift them across the many evaluations.
FdReport finite_diff_check(const LossFn& loss_fn, ParamStore& params, double eps = 1e-5,
                           double tol = 1e-5, double rel_floor = 1e-4);

}  // namespace symcomp
