#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "qtitle/tensor.hpp"

namespace qtitle {

struct GradCheckResult {
    double max_relative_error = 0.0;
    std::string worst;  // "<name>[<index>]" of the worst coordinate
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    double max_absolute_error = 0.0;
    std::size_t coordinates = 0;
};

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central differences of `f` at `x`, compared coordinate-wise to `analytic`.
GradCheckResult check_gradients(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> x, std::span<const double> analytic,
                                double eps = 1e-5);

/// Same check over parameter values; each parameter's `grad` must already hold
/// the analytic gradient of `loss()`. Values are restored afterwards.
GradCheckResult check_gradients(const std::function<double()>& loss,
                                std::span<Parameter* const> params, double eps = 1e-5);

}  // namespace qtitle
