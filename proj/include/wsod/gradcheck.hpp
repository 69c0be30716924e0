#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

#include "wsod/tensor.hpp"

namespace wsod {

struct ValueAndGradient {
  double value = 0.0;
  Tensor gradient;
};

/// A scalar-valued map together with its analytic gradient.
using DifferentiableFunction = std::function<ValueAndGradient(const Tensor&)>;

struct GradientCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Central-difference derivative of `f` along coordinate `index`.
double central_difference(const DifferentiableFunction& f, const Tensor& point, std::size_t index,
                          double h);

/// Compares the analytic gradient of `f` at `point` with central differences
/// (f(x+h e) - f(x-h e)) / 2h. The relative error per coordinate is
/// |a - n| / max(1e-8, |a| + |n|). Checks every coordinate unless `indices`
/// names a subset.
GradientCheckResult check_gradient(const DifferentiableFunction& f, const Tensor& point, double h,
                                   const std::optional<std::vector<std::size_t>>& indices = {});

double relative_error(double analytic, double numeric);

}  // namespace wsod
