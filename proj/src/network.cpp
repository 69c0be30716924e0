#include "wsod/network.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace wsod {

void NetworkConfig::validate() const {
  if (input_width < 1 || input_height < 1 || input_channels < 1) {
    throw std::invalid_argument("network: input dims must be positive");
  }
  if (class_count < 1) throw std::invalid_argument("network: class_count must be >= 1");
  if (head_width < 1) throw std::invalid_argument("network: head_width must be >= 1");
  int w = input_width, h = input_height;
  for (int width : block_widths) {
    if (width < 1) throw std::invalid_argument("network: block widths must be positive");
    if (w % 2 != 0 || h % 2 != 0) {
      throw std::invalid_argument("network: input " + std::to_string(input_width) + "x" +
                                  std::to_string(input_height) + " not divisible by 2^" +
                                  std::to_string(block_widths.size()));
    }
    w /= 2;
    h /= 2;
  }
}

int NetworkConfig::output_width() const {
  return input_width >> static_cast<int>(block_widths.size());
}
int NetworkConfig::output_height() const {
  return input_height >> static_cast<int>(block_widths.size());
}

Network::Network(NetworkConfig config, std::vector<ConvParams> layers)
    : config_(std::move(config)), layers_(std::move(layers)) {
  config_.validate();
  if (layers_.size() != config_.conv_layer_count()) {
    throw std::invalid_argument("network: expected " + std::to_string(config_.conv_layer_count()) +
                                " conv layers, got " + std::to_string(layers_.size()));
  }
  int in_ch = config_.input_channels;
  std::size_t li = 0;
  auto expect = [&](int out_ch, std::size_t k) {
    const ConvParams& p = layers_[li];
    const Shape want{static_cast<std::size_t>(out_ch), static_cast<std::size_t>(in_ch), k, k};
    if (p.kernel.shape() != want || p.bias.size() != want[0]) {
      throw std::invalid_argument("network: layer " + std::to_string(li) + " has kernel " +
                                  shape_string(p.kernel.shape()) + ", expected " +
                                  shape_string(want));
    }
    in_ch = out_ch;
    ++li;
  };
  for (int width : config_.block_widths) {
    expect(width, 3);
    expect(width, 3);
  }
  expect(config_.head_width, 3);
  expect(config_.class_count, 1);
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const ConvParams& p : layers_) n += p.parameter_count();
  return n;
}

bool operator==(const Network& a, const Network& b) {
  if (!(a.config_ == b.config_) || a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    if (!(a.layers_[i].kernel == b.layers_[i].kernel) || a.layers_[i].bias != b.layers_[i].bias) {
      return false;
    }
  }
  return true;
}

Network build_network(const NetworkConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  std::vector<ConvParams> layers;
  int in_ch = config.input_channels;
  auto add = [&](int out_ch, std::size_t k) {
    const std::size_t fan_in = static_cast<std::size_t>(in_ch) * k * k;
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    ConvParams p{Tensor({static_cast<std::size_t>(out_ch), static_cast<std::size_t>(in_ch), k, k}),
                 std::vector<double>(static_cast<std::size_t>(out_ch), 0.0)};
    for (double& v : p.kernel.values()) v = dist(rng);
    layers.push_back(std::move(p));
    in_ch = out_ch;
  };
  for (int width : config.block_widths) {
    add(width, 3);
    add(width, 3);
  }
  add(config.head_width, 3);
  add(config.class_count, 1);
  return Network(config, std::move(layers));
}

namespace {

constexpr ConvGeometry kSame3x3{1, 1};
constexpr ConvGeometry kPointwise{1, 0};

void check_image(const Network& net, const Tensor& image) {
  const NetworkConfig& c = net.config();
  const Shape want{static_cast<std::size_t>(c.input_channels),
                   static_cast<std::size_t>(c.input_height),
                   static_cast<std::size_t>(c.input_width)};
  if (image.shape() != want) {
    throw std::invalid_argument("network: image shape " + shape_string(image.shape()) +
                                ", expected " + shape_string(want));
  }
}

Tensor centred(const Tensor& image) {
  Tensor x = image;
  for (double& v : x.values()) v -= kInputMean;
  return x;
}

ConvGeometry geometry_of(const Network& net, std::size_t layer) {
  return layer + 1 == net.layers().size() ? kPointwise : kSame3x3;
}

}  // namespace

ForwardTrace forward_with_trace(const Network& net, const Tensor& image) {
  check_image(net, image);
  ForwardTrace trace;
  const auto layers = net.layers();
  const std::size_t blocks = net.config().block_widths.size();
  Tensor x = centred(image);
  std::size_t li = 0;
  auto conv = [&](bool activate) {
    trace.conv_inputs.push_back(x);
    Tensor z = conv2d_forward(x, layers[li], geometry_of(net, li));
    x = activate ? relu_forward(z) : z;
    trace.conv_outputs.push_back(std::move(z));
    ++li;
  };
  for (std::size_t b = 0; b < blocks; ++b) {
    conv(true);
    conv(true);
    trace.pool_input_shapes.push_back(x.shape());
    MaxPoolResult pooled = maxpool2x2_forward(x);
    trace.pool_argmax.push_back(std::move(pooled.argmax));
    x = std::move(pooled.output);
  }
  conv(true);
  conv(false);
  return trace;
}

ClassActivationMap forward_cam(const Network& net, const Tensor& image) {
  check_image(net, image);
  const auto layers = net.layers();
  const std::size_t blocks = net.config().block_widths.size();
  Tensor x = centred(image);
  std::size_t li = 0;
  for (std::size_t b = 0; b < blocks; ++b) {
    x = relu_forward(conv2d_forward(x, layers[li], kSame3x3));
    ++li;
    x = relu_forward(conv2d_forward(x, layers[li], kSame3x3));
    ++li;
    x = maxpool2x2_forward(x).output;
  }
  x = relu_forward(conv2d_forward(x, layers[li], kSame3x3));
  ++li;
  return conv2d_forward(x, layers[li], kPointwise);
}

ParameterGradients ParameterGradients::zeros_like(const Network& net) {
  ParameterGradients g;
  for (const ConvParams& p : net.layers()) {
    g.kernels.emplace_back(p.kernel.shape());
    g.biases.emplace_back(p.bias.size(), 0.0);
  }
  return g;
}

ParameterGradients& ParameterGradients::operator+=(const ParameterGradients& other) {
  if (other.kernels.size() != kernels.size()) {
    throw std::invalid_argument("parameter gradients: layer count mismatch");
  }
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    kernels[i] += other.kernels[i];
    for (std::size_t j = 0; j < biases[i].size(); ++j) biases[i][j] += other.biases[i][j];
  }
  return *this;
}

ParameterGradients& ParameterGradients::operator*=(double scale) {
  for (std::size_t i = 0; i < kernels.size(); ++i) {
    kernels[i] *= scale;
    for (double& b : biases[i]) b *= scale;
  }
  return *this;
}

BackwardResult backward(const Network& net, const ForwardTrace& trace, const Tensor& grad_cam) {
  const auto layers = net.layers();
  if (trace.conv_outputs.size() != layers.size()) {
    throw std::invalid_argument("backward: trace does not belong to this network");
  }
  if (grad_cam.shape() != trace.cam().shape()) {
    throw std::invalid_argument("backward: gradient shape " + shape_string(grad_cam.shape()) +
                                " does not match map " + shape_string(trace.cam().shape()));
  }
  BackwardResult result{ParameterGradients::zeros_like(net), Tensor()};
  Tensor g = grad_cam;
  std::size_t li = layers.size();
  auto conv_back = [&](bool activated) {
    --li;
    if (activated) g = relu_backward(trace.conv_outputs[li], g);
    ConvGradients cg = conv2d_backward(trace.conv_inputs[li], layers[li], g, geometry_of(net, li));
    result.params.kernels[li] = std::move(cg.kernel);
    result.params.biases[li] = std::move(cg.bias);
    g = std::move(cg.input);
  };
  conv_back(false);
  conv_back(true);
  for (std::size_t b = net.config().block_widths.size(); b-- > 0;) {
    g = maxpool2x2_backward(trace.pool_input_shapes[b], trace.pool_argmax[b], g);
    conv_back(true);
    conv_back(true);
  }
  result.input = std::move(g);
  return result;
}

std::vector<double> flatten_parameters(const Network& net) {
  std::vector<double> flat;
  flat.reserve(net.parameter_count());
  for (const ConvParams& p : net.layers()) {
    flat.insert(flat.end(), p.kernel.values().begin(), p.kernel.values().end());
    flat.insert(flat.end(), p.bias.begin(), p.bias.end());
  }
  return flat;
}

void assign_parameters(Network& net, std::span<const double> flat) {
  if (flat.size() != net.parameter_count()) {
    throw std::invalid_argument("assign_parameters: expected " +
                                std::to_string(net.parameter_count()) + " values");
  }
  std::size_t pos = 0;
  for (ConvParams& p : net.layers()) {
    for (double& v : p.kernel.values()) v = flat[pos++];
    for (double& v : p.bias) v = flat[pos++];
  }
}

std::vector<double> flatten_gradients(const ParameterGradients& grads) {
  std::vector<double> flat;
  for (std::size_t i = 0; i < grads.kernels.size(); ++i) {
    flat.insert(flat.end(), grads.kernels[i].values().begin(), grads.kernels[i].values().end());
    flat.insert(flat.end(), grads.biases[i].begin(), grads.biases[i].end());
  }
  return flat;
}

}  // namespace wsod
