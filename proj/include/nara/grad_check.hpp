#pragma once

#include <functional>
#include <string>
#include <vector>

#include "nara/tensor.hpp"

namespace nara {

struct GradCheckEntry {
    std::string name;
    std::size_t count = 0;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_error = 0.0;
    std::size_t elements = 0;
    bool passed(double tol) const { return max_rel_error < tol; }
};

struct NamedParam {
    std::string name;
    Tensor tensor;
};

struct GradCheckOptions {
    double h = 1e-5;
    // Denominator floor for the relative error |a - n| / max(|a|, |n|, floor);
    // keeps near-zero gradients from reporting rounding noise as error.
    double rel_floor = 1e-6;
};

/// Central-difference check of analytic gradients.
///
/// `loss` rebuilds the scalar loss from the current parameter values. The
/// analytic gradient comes from one backward() through it; each element is
/// then perturbed by ±h in place and restored. Throws std::invalid_argument
/// for h <= 0 and std::runtime_error when two baseline evaluations differ
/// (non-deterministic loss).
GradCheckReport finite_diff_check(const std::function<Tensor()>& loss, std::vector<NamedParam> params,
                                  GradCheckOptions options = {});

}  // namespace nara
