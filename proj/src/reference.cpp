#include "wsod/reference.hpp"

#include <stdexcept>

namespace wsod::reference {
namespace {

Tensor as_batch(const Tensor& t) {
  if (t.rank() == 4) return t;
  if (t.rank() == 3) {
    return Tensor({1, t.dim(0), t.dim(1), t.dim(2)}, {t.values().begin(), t.values().end()});
  }
  throw std::invalid_argument("reference conv2d: expected rank 3 or 4");
}

Tensor restore_rank(Tensor t, std::size_t rank) {
  if (rank == 4) return t;
  return Tensor({t.dim(1), t.dim(2), t.dim(3)}, {t.values().begin(), t.values().end()});
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const ConvParams& params, ConvGeometry geometry) {
  const Tensor x = as_batch(input);
  const std::size_t n_batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (params.in_channels() != cin) throw std::invalid_argument("reference conv2d: channels");
  const std::size_t cout = params.out_channels(), kh = params.kernel_h(), kw = params.kernel_w();
  const std::size_t oh = conv_output_extent(h, kh, geometry);
  const std::size_t ow = conv_output_extent(w, kw, geometry);
  const long s = geometry.stride, pad = geometry.padding;

  Tensor y({n_batch, cout, oh, ow});
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = params.bias[o];
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long iy = static_cast<long>(oy) * s - pad + static_cast<long>(ky);
                const long ix = static_cast<long>(ox) * s - pad + static_cast<long>(kx);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                  continue;
                acc += x.at(n, c, iy, ix) * params.kernel.at(o, c, ky, kx);
              }
          y.at(n, o, oy, ox) = acc;
        }
  return restore_rank(std::move(y), input.rank());
}

ConvGradients conv2d_backward(const Tensor& input, const ConvParams& params,
                              const Tensor& grad_output, ConvGeometry geometry) {
  const Tensor x = as_batch(input);
  const Tensor dy = as_batch(grad_output);
  const std::size_t n_batch = x.dim(0), cin = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t cout = params.out_channels(), kh = params.kernel_h(), kw = params.kernel_w();
  const std::size_t oh = dy.dim(2), ow = dy.dim(3);
  const long s = geometry.stride, pad = geometry.padding;

  Tensor dx(x.shape());
  ConvGradients g{Tensor(), Tensor(params.kernel.shape()), std::vector<double>(cout, 0.0)};
  for (std::size_t n = 0; n < n_batch; ++n)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double go = dy.at(n, o, oy, ox);
          g.bias[o] += go;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long iy = static_cast<long>(oy) * s - pad + static_cast<long>(ky);
                const long ix = static_cast<long>(ox) * s - pad + static_cast<long>(kx);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                  continue;
                g.kernel.at(o, c, ky, kx) += go * x.at(n, c, iy, ix);
                dx.at(n, c, iy, ix) += go * params.kernel.at(o, c, ky, kx);
              }
        }
  g.input = restore_rank(std::move(dx), input.rank());
  return g;
}

}  // namespace wsod::reference
