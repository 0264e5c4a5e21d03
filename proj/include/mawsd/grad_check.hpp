#ifndef MAWSD_GRAD_CHECK_HPP
#define MAWSD_GRAD_CHECK_HPP

#include "mawsd/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace mawsd {

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct GradCheckOptions {
    double epsilon = 1e-5;
    double tolerance = 1e-4;
    /// Denominator floor of the relative error, so that coordinates whose
    /// true gradient is ~0 are judged on absolute error instead.
    double floor = 1e-6;
    /// Coordinates checked per parameter; larger tensors get a seeded random
    /// subsample. Zero checks every coordinate.
    Index max_coords = 0;
    std::uint64_t seed = 0;
};

struct ParamGradError {
    std::string name;
    double max_rel_error = 0.0;
    Index coords_checked = 0;
};

/// Outcome of comparing analytic against central-difference gradients.
struct GradReport {
    std::vector<ParamGradError> params;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

/// |a - n| / max(|a|, |n|, floor)
double relative_error(double analytic, double numeric, double floor);

/// Checks `loss` (rebuilt from the current parameter values on every call)
/// against central differences for each named parameter. Parameter values
/// are restored afterwards and gradients are left zeroed.
/// Throws NumericError naming the parameter if a non-finite value shows up.
GradReport grad_check(const std::function<Tensor()>& loss, const NamedTensors& params,
                      const GradCheckOptions& options = {});

} // namespace mawsd

#endif // MAWSD_GRAD_CHECK_HPP
