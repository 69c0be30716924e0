#pragma once

// Layer kernels with hand-written backward passes.
//
// Spatial layers accept C x H x W (one sample) or N x C x H x W (batch)
// tensors. Batched convolution runs its samples on OpenMP workers; the
// per-sample work is a single-threaded im2col + GEMM. Serial nested-loop
// versions of the same kernels live in reference.hpp.

#include <cstddef>
#include <vector>

#include "wsod/tensor.hpp"

namespace wsod {

/// Convolution parameters: kernel is out_ch x in_ch x kh x kw.
struct ConvParams {
  Tensor kernel;
  std::vector<double> bias;

  std::size_t out_channels() const { return kernel.dim(0); }
  std::size_t in_channels() const { return kernel.dim(1); }
  std::size_t kernel_h() const { return kernel.dim(2); }
  std::size_t kernel_w() const { return kernel.dim(3); }
  std::size_t parameter_count() const { return kernel.size() + bias.size(); }
};

struct ConvGradients {
  Tensor input;
  Tensor kernel;
  std::vector<double> bias;
};

struct ConvGeometry {
  int stride = 1;
  int padding = 0;
};

/// Output extent of a convolution along one axis; throws when the kernel
/// does not fit.
std::size_t conv_output_extent(std::size_t in, std::size_t kernel, ConvGeometry geometry);

/// Cross-correlation (no kernel flip).
Tensor conv2d_forward(const Tensor& input, const ConvParams& params, ConvGeometry geometry);
ConvGradients conv2d_backward(const Tensor& input, const ConvParams& params,
                              const Tensor& grad_output, ConvGeometry geometry);

Tensor relu_forward(const Tensor& input);
/// Gradient is passed where the forward input was strictly positive.
Tensor relu_backward(const Tensor& input, const Tensor& grad_output);

struct MaxPoolResult {
  Tensor output;
  /// Flat input index of the selected element for every output element.
  std::vector<std::size_t> argmax;
};

/// 2x2, stride 2. Odd spatial dimensions are rejected. Ties go to the first
/// element in row-major order within the window.
MaxPoolResult maxpool2x2_forward(const Tensor& input);
Tensor maxpool2x2_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                           const Tensor& grad_output);

double sigmoid(double x);
Tensor sigmoid_forward(const Tensor& input);
/// Takes the forward *output* s and returns grad * s * (1 - s).
Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_output);

/// y = E x.
Vector fixed_linear_forward(const Vector& input, const Matrix& weights);
/// Returns E^T g.
Vector fixed_linear_backward(const Vector& grad_output, const Matrix& weights);

/// Linear layer whose weights never change after construction. It has no
/// parameter-gradient path at all; only input gradients flow through it.
class FixedLinearLayer {
 public:
  explicit FixedLinearLayer(Matrix weights) : weights_(std::move(weights)) {}

  static constexpr bool kTrainable = false;

  Vector forward(const Vector& input) const { return fixed_linear_forward(input, weights_); }
  Vector backward(const Vector& grad_output) const {
    return fixed_linear_backward(grad_output, weights_);
  }
  const Matrix& weights() const { return weights_; }

 private:
  Matrix weights_;
};

}  // namespace wsod
