#pragma once

// Small fully convolutional network with exactly one output channel per
// class.
//
//   for each block width w:  conv3x3(w) relu conv3x3(w) relu maxpool2x2
//   head:                    conv3x3(head_width) relu conv1x1(C)
//
// Input pixels in [0, 1] are centred by subtracting kInputMean before the
// first convolution. The output of the last 1x1 convolution is the
// pre-sigmoid class activation map.

#include <cstdint>
#include <span>
#include <vector>

#include "wsod/layers.hpp"
#include "wsod/pyramid.hpp"

namespace wsod {

/// Subtracted from every input pixel before the first convolution.
inline constexpr double kInputMean = 0.5;

struct NetworkConfig {
  int input_width = 64;
  int input_height = 64;
  int input_channels = 3;
  int class_count = 4;
  std::vector<int> block_widths{16, 32, 64};
  int head_width = 64;

  void validate() const;
  int output_width() const;
  int output_height() const;
  std::size_t conv_layer_count() const { return 2 * block_widths.size() + 2; }

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

class Network {
 public:
  Network(NetworkConfig config, std::vector<ConvParams> layers);

  const NetworkConfig& config() const { return config_; }
  std::span<const ConvParams> layers() const { return layers_; }
  std::span<ConvParams> layers() { return layers_; }
  std::size_t parameter_count() const;

  friend bool operator==(const Network& a, const Network& b);

 private:
  NetworkConfig config_;
  std::vector<ConvParams> layers_;
};

/// Fan-in scaled uniform init (He-uniform bound sqrt(6 / fan_in)), zero
/// biases. Deterministic for a given seed.
Network build_network(const NetworkConfig& config, std::uint64_t seed);

/// Everything the backward pass needs from one forward pass.
struct ForwardTrace {
  std::vector<Tensor> conv_inputs;   // input to each conv layer
  std::vector<Tensor> conv_outputs;  // pre-activation output of each conv layer
  std::vector<std::vector<std::size_t>> pool_argmax;
  std::vector<Shape> pool_input_shapes;

  const Tensor& cam() const { return conv_outputs.back(); }
};

ClassActivationMap forward_cam(const Network& net, const Tensor& image);
ForwardTrace forward_with_trace(const Network& net, const Tensor& image);

/// Per-layer parameter gradients, aligned with Network::layers().
struct ParameterGradients {
  std::vector<Tensor> kernels;
  std::vector<std::vector<double>> biases;

  static ParameterGradients zeros_like(const Network& net);
  ParameterGradients& operator+=(const ParameterGradients& other);
  ParameterGradients& operator*=(double scale);
};

struct BackwardResult {
  ParameterGradients params;
  Tensor input;
};

BackwardResult backward(const Network& net, const ForwardTrace& trace, const Tensor& grad_cam);

/// Flattened view helpers used by gradient checks and the optimizer.
std::vector<double> flatten_parameters(const Network& net);
void assign_parameters(Network& net, std::span<const double> flat);
std::vector<double> flatten_gradients(const ParameterGradients& grads);

}  // namespace wsod
