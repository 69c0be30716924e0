#pragma once

#include <random>

#include "wsod/dataset.hpp"

namespace wsod {

struct AugmentationConfig {
  double max_translation_frac = 0.05;
  double max_rotation_deg = 5.0;
  double gaussian_noise_sigma = 0.02;
  double mirror_prob = 0.5;
  bool translate = true;
  bool rotate = true;
  bool noise = true;
  bool mirror = true;

  static AugmentationConfig disabled();
  void validate() const;
};

// Geometric transforms move points and boxes along with the pixels. Pixels
// that come from outside the frame replicate the nearest edge pixel. Boxes
// are clipped to the frame; a point that leaves the frame is marked not
// visible (its class stays present in the sample).

Sample translate(const Sample& sample, int dx, int dy);
/// Counter-clockwise rotation (in image coordinates, y down) about the image
/// centre with nearest-neighbour resampling.
Sample rotate(const Sample& sample, double degrees);
/// Mirror about the vertical axis: x -> W - 1 - x.
Sample mirror(const Sample& sample);
/// Additive Gaussian pixel noise, clamped to [0, 1].
Sample add_noise(const Sample& sample, double sigma, std::mt19937_64& rng);

/// Applies translation, rotation, noise and mirroring in that order, each
/// when enabled.
Sample augment(const Sample& sample, const AugmentationConfig& config, std::mt19937_64& rng);

}  // namespace wsod
