#pragma once

// Serial nested-loop kernels. They are slow and obviously correct, and serve
// as the comparison baseline for the optimized kernels in layers.hpp (tests
// and the benchmark target).

#include "wsod/layers.hpp"

namespace wsod::reference {

Tensor conv2d_forward(const Tensor& input, const ConvParams& params, ConvGeometry geometry);
ConvGradients conv2d_backward(const Tensor& input, const ConvParams& params,
                              const Tensor& grad_output, ConvGeometry geometry);

}  // namespace wsod::reference
