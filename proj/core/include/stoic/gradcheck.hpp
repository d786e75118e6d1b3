#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stoic/params.hpp"
#include "stoic/tensor.hpp"

namespace stoic {

/// Result of comparing analytic gradients against central finite differences.
struct GradReport {
    struct Row {
        std::string path;     // parameter path, worst sampled coordinate
        int64_t coord = 0;
        double analytic = 0;
        double numeric = 0;
        double rel_error = 0;
    };
    double max_rel_error = 0;
    std::vector<Row> per_parameter;

    std::string to_string() const;
};

/// rel = |a - n| / max(|a|, |n|, 1e-12)
double gradcheck_rel_error(double analytic, double numeric);

/// Deterministic scalar loss of a parameter store; must build an autograd
/// graph over the store's tensors when gradients are enabled.
using LossFn = std::function<Tensor(ParamStore&)>;

/// Checks analytic gradients of f against central differences
/// (f(p+h) - f(p-h)) / 2h, coordinate by coordinate.
///
/// At most max_coords_per_tensor coordinates are probed per parameter,
/// chosen deterministically from the parameter path. f must be deterministic
/// given params (fixed inputs, fixed RNG); a non-finite f value throws.
///
/// Coordinates where analytic and numeric values are both below zero_floor
/// are recorded as exact agreement: central differences carry roundoff noise
/// of order |f| * eps / (2h), so magnitudes under the floor cannot be
/// resolved (structurally zero gradients, e.g. attention key biases, land
/// here).
GradReport finite_diff_grad_check(const LossFn& f, ParamStore& params, double step,
                                  int max_coords_per_tensor = 16, double zero_floor = 1e-8);

}  // namespace stoic
