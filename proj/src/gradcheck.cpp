#include "wsod/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace wsod {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

double central_difference(const DifferentiableFunction& f, const Tensor& point, std::size_t index,
                          double h) {
  Tensor probe = point;
  probe[index] = point[index] + h;
  const double plus = f(probe).value;
  probe[index] = point[index] - h;
  const double minus = f(probe).value;
  return (plus - minus) / (2.0 * h);
}

GradientCheckResult check_gradient(const DifferentiableFunction& f, const Tensor& point, double h,
                                   const std::optional<std::vector<std::size_t>>& indices) {
  if (!(h > 0.0)) throw std::invalid_argument("check_gradient: h must be positive");
  const ValueAndGradient base = f(point);
  if (base.gradient.shape() != point.shape()) {
    throw std::invalid_argument("check_gradient: gradient shape does not match point");
  }

  std::vector<std::size_t> all;
  if (!indices) {
    all.resize(point.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  }
  const std::vector<std::size_t>& coords = indices ? *indices : all;

  GradientCheckResult result;
  bool first = true;
  for (std::size_t idx : coords) {
    const double numeric = central_difference(f, point, idx, h);
    const double analytic = base.gradient[idx];
    const double err = relative_error(analytic, numeric);
    if (first || err > result.max_relative_error) result = {err, idx, analytic, numeric};
    first = false;
  }
  return result;
}

}  // namespace wsod
