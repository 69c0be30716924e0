#include "wsod/layers.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace wsod {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct SpatialView {
  std::size_t batch;
  std::size_t channels;
  std::size_t height;
  std::size_t width;
  bool batched;
};

SpatialView spatial_view(const Tensor& t, const char* what) {
  if (t.rank() == 3) return {1, t.dim(0), t.dim(1), t.dim(2), false};
  if (t.rank() == 4) return {t.dim(0), t.dim(1), t.dim(2), t.dim(3), true};
  throw std::invalid_argument(std::string(what) + ": expected rank 3 or 4, got " +
                              shape_string(t.shape()));
}

Shape make_shape(const SpatialView& v, std::size_t c, std::size_t h, std::size_t w) {
  if (v.batched) return {v.batch, c, h, w};
  return {c, h, w};
}

void check_params(const ConvParams& params, std::size_t in_channels) {
  if (params.kernel.rank() != 4) throw std::invalid_argument("conv2d: kernel must be rank 4");
  if (params.in_channels() != in_channels) {
    throw std::invalid_argument("conv2d: kernel expects " + std::to_string(params.in_channels()) +
                                " input channels, got " + std::to_string(in_channels));
  }
  if (params.bias.size() != params.out_channels()) {
    throw std::invalid_argument("conv2d: bias length does not match output channels");
  }
}

struct ConvPlan {
  std::size_t channels, height, width;
  std::size_t kh, kw;
  std::size_t out_h, out_w;
  ConvGeometry geometry;

  std::size_t rows() const { return channels * kh * kw; }
  std::size_t cols() const { return out_h * out_w; }
};

// Unfolds one C x H x W sample into a (C*kh*kw) x (out_h*out_w) row-major
// matrix; out-of-frame taps read as zero.
void im2col(const double* input, const ConvPlan& p, double* col) {
  const long stride = p.geometry.stride;
  const long pad = p.geometry.padding;
  std::size_t row = 0;
  for (std::size_t c = 0; c < p.channels; ++c) {
    const double* plane = input + c * p.height * p.width;
    for (std::size_t ky = 0; ky < p.kh; ++ky) {
      for (std::size_t kx = 0; kx < p.kw; ++kx, ++row) {
        double* dst = col + row * p.cols();
        for (std::size_t oy = 0; oy < p.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
          double* dst_row = dst + oy * p.out_w;
          if (iy < 0 || iy >= static_cast<long>(p.height)) {
            for (std::size_t ox = 0; ox < p.out_w; ++ox) dst_row[ox] = 0.0;
            continue;
          }
          const double* src = plane + static_cast<std::size_t>(iy) * p.width;
          for (std::size_t ox = 0; ox < p.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
            dst_row[ox] = (ix < 0 || ix >= static_cast<long>(p.width)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

void col2im(const double* col, const ConvPlan& p, double* grad_input) {
  const long stride = p.geometry.stride;
  const long pad = p.geometry.padding;
  std::size_t row = 0;
  for (std::size_t c = 0; c < p.channels; ++c) {
    double* plane = grad_input + c * p.height * p.width;
    for (std::size_t ky = 0; ky < p.kh; ++ky) {
      for (std::size_t kx = 0; kx < p.kw; ++kx, ++row) {
        const double* src = col + row * p.cols();
        for (std::size_t oy = 0; oy < p.out_h; ++oy) {
          const long iy = static_cast<long>(oy) * stride - pad + static_cast<long>(ky);
          if (iy < 0 || iy >= static_cast<long>(p.height)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * p.width;
          const double* src_row = src + oy * p.out_w;
          for (std::size_t ox = 0; ox < p.out_w; ++ox) {
            const long ix = static_cast<long>(ox) * stride - pad + static_cast<long>(kx);
            if (ix >= 0 && ix < static_cast<long>(p.width)) dst[ix] += src_row[ox];
          }
        }
      }
    }
  }
}

// Per-thread scratch for the unfolded input and its gradient. Reusing them
// avoids a large allocation (and the page faults that come with it) on
// every call.
RowMatrix& scratch_col(std::size_t rows, std::size_t cols) {
  thread_local RowMatrix buffer;
  buffer.resize(static_cast<long>(rows), static_cast<long>(cols));
  return buffer;
}

RowMatrix& scratch_dcol(std::size_t rows, std::size_t cols) {
  thread_local RowMatrix buffer;
  buffer.resize(static_cast<long>(rows), static_cast<long>(cols));
  return buffer;
}

ConvPlan make_plan(const SpatialView& v, const ConvParams& params, ConvGeometry geometry) {
  ConvPlan p{v.channels, v.height, v.width, params.kernel_h(), params.kernel_w(), 0, 0, geometry};
  p.out_h = conv_output_extent(v.height, p.kh, geometry);
  p.out_w = conv_output_extent(v.width, p.kw, geometry);
  return p;
}

}  // namespace

std::size_t conv_output_extent(std::size_t in, std::size_t kernel, ConvGeometry geometry) {
  if (geometry.stride < 1 || geometry.padding < 0) {
    throw std::invalid_argument("conv2d: stride must be >= 1 and padding >= 0");
  }
  const std::size_t padded = in + 2 * static_cast<std::size_t>(geometry.padding);
  if (padded < kernel) {
    throw std::invalid_argument("conv2d: kernel " + std::to_string(kernel) +
                                " larger than padded input " + std::to_string(padded));
  }
  return (padded - kernel) / static_cast<std::size_t>(geometry.stride) + 1;
}

Tensor conv2d_forward(const Tensor& input, const ConvParams& params, ConvGeometry geometry) {
  const SpatialView v = spatial_view(input, "conv2d");
  check_params(params, v.channels);
  const ConvPlan p = make_plan(v, params, geometry);
  const std::size_t out_ch = params.out_channels();

  Tensor output(make_shape(v, out_ch, p.out_h, p.out_w));
  const Eigen::Map<const RowMatrix> weights(params.kernel.data(), static_cast<long>(out_ch),
                                            static_cast<long>(p.rows()));
  const Eigen::Map<const Eigen::VectorXd> bias(params.bias.data(), static_cast<long>(out_ch));
  const std::size_t in_stride = v.channels * v.height * v.width;
  const std::size_t out_stride = out_ch * p.cols();

#pragma omp parallel for schedule(static) if (v.batch > 1)
  for (std::size_t n = 0; n < v.batch; ++n) {
    RowMatrix& col = scratch_col(p.rows(), p.cols());
    im2col(input.data() + n * in_stride, p, col.data());
    Eigen::Map<RowMatrix> out(output.data() + n * out_stride, static_cast<long>(out_ch),
                              static_cast<long>(p.cols()));
    out.noalias() = weights * col;
    out.colwise() += bias;
  }
  return output;
}

ConvGradients conv2d_backward(const Tensor& input, const ConvParams& params,
                              const Tensor& grad_output, ConvGeometry geometry) {
  const SpatialView v = spatial_view(input, "conv2d");
  check_params(params, v.channels);
  const ConvPlan p = make_plan(v, params, geometry);
  const std::size_t out_ch = params.out_channels();
  if (grad_output.shape() != make_shape(v, out_ch, p.out_h, p.out_w)) {
    throw std::invalid_argument("conv2d_backward: gradient shape " +
                                shape_string(grad_output.shape()) + " does not match output");
  }

  ConvGradients grads{Tensor(input.shape()), Tensor(params.kernel.shape()),
                      std::vector<double>(out_ch, 0.0)};
  const Eigen::Map<const RowMatrix> weights(params.kernel.data(), static_cast<long>(out_ch),
                                            static_cast<long>(p.rows()));
  const std::size_t in_stride = v.channels * v.height * v.width;
  const std::size_t out_stride = out_ch * p.cols();

  std::vector<RowMatrix> kernel_parts(v.batch);
  std::vector<Eigen::VectorXd> bias_parts(v.batch);

#pragma omp parallel for schedule(static) if (v.batch > 1)
  for (std::size_t n = 0; n < v.batch; ++n) {
    RowMatrix& col = scratch_col(p.rows(), p.cols());
    im2col(input.data() + n * in_stride, p, col.data());
    const Eigen::Map<const RowMatrix> dy(grad_output.data() + n * out_stride,
                                         static_cast<long>(out_ch), static_cast<long>(p.cols()));
    kernel_parts[n].noalias() = dy * col.transpose();
    // Plain loop: Eigen's vectorized reduction over a Map peels according to
    // the address, which would make the sum order allocation dependent.
    bias_parts[n].resize(static_cast<long>(out_ch));
    for (long r = 0; r < dy.rows(); ++r) {
      double s = 0.0;
      for (long c = 0; c < dy.cols(); ++c) s += dy(r, c);
      bias_parts[n](r) = s;
    }
    RowMatrix& dcol = scratch_dcol(p.rows(), p.cols());
    dcol.noalias() = weights.transpose() * dy;
    col2im(dcol.data(), p, grads.input.data() + n * in_stride);
  }

  // Index-ordered reduction keeps the result independent of thread count.
  Eigen::Map<RowMatrix> dw(grads.kernel.data(), static_cast<long>(out_ch),
                           static_cast<long>(p.rows()));
  Eigen::Map<Eigen::VectorXd> db(grads.bias.data(), static_cast<long>(out_ch));
  for (std::size_t n = 0; n < v.batch; ++n) {
    dw += kernel_parts[n];
    db += bias_parts[n];
  }
  return grads;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? input[i] : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_output) {
  if (input.shape() != grad_output.shape()) throw std::invalid_argument("relu_backward: shape");
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = input[i] > 0.0 ? grad_output[i] : 0.0;
  return out;
}

MaxPoolResult maxpool2x2_forward(const Tensor& input) {
  const SpatialView v = spatial_view(input, "maxpool2x2");
  if (v.height % 2 != 0 || v.width % 2 != 0) {
    throw std::invalid_argument("maxpool2x2: odd spatial dims " + shape_string(input.shape()));
  }
  const std::size_t oh = v.height / 2, ow = v.width / 2;
  MaxPoolResult r{Tensor(make_shape(v, v.channels, oh, ow)), {}};
  r.argmax.resize(r.output.size());
  const std::size_t planes = v.batch * v.channels;
  for (std::size_t pl = 0; pl < planes; ++pl) {
    const std::size_t in_base = pl * v.height * v.width;
    const std::size_t out_base = pl * oh * ow;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = in_base + (2 * oy) * v.width + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = in_base + (2 * oy + dy) * v.width + 2 * ox + dx;
            if (input[idx] > input[best]) best = idx;
          }
        }
        r.output[out_base + oy * ow + ox] = input[best];
        r.argmax[out_base + oy * ow + ox] = best;
      }
    }
  }
  return r;
}

Tensor maxpool2x2_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                           const Tensor& grad_output) {
  if (argmax.size() != grad_output.size()) {
    throw std::invalid_argument("maxpool2x2_backward: argmax/gradient size mismatch");
  }
  Tensor grad(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) grad[argmax[i]] += grad_output[i];
  return grad;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor sigmoid_forward(const Tensor& input) {
  Tensor out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) out[i] = sigmoid(input[i]);
  return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& grad_output) {
  if (output.shape() != grad_output.shape()) {
    throw std::invalid_argument("sigmoid_backward: shape");
  }
  Tensor out(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) {
    out[i] = grad_output[i] * output[i] * (1.0 - output[i]);
  }
  return out;
}

Vector fixed_linear_forward(const Vector& input, const Matrix& weights) {
  if (weights.cols() != input.size()) {
    throw std::invalid_argument("fixed_linear_forward: input length " +
                                std::to_string(input.size()) + " vs " +
                                std::to_string(weights.cols()) + " columns");
  }
  return weights * input;
}

Vector fixed_linear_backward(const Vector& grad_output, const Matrix& weights) {
  if (weights.rows() != grad_output.size()) {
    throw std::invalid_argument("fixed_linear_backward: gradient length " +
                                std::to_string(grad_output.size()) + " vs " +
                                std::to_string(weights.rows()) + " rows");
  }
  return weights.transpose() * grad_output;
}

}  // namespace wsod
