#pragma once

// Reading points and boxes off class activation maps.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "wsod/pyramid.hpp"
#include "wsod/tensor.hpp"

namespace wsod {

/// Pixel box, inclusive on the min edges and exclusive on the max edges.
struct Box {
  int x_min = 0;
  int y_min = 0;
  int x_max = 0;
  int y_max = 0;

  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
  long area() const { return static_cast<long>(width()) * height(); }
  bool valid() const { return x_min < x_max && y_min < y_max; }
  bool inside(ImageSize size) const {
    return x_min >= 0 && y_min >= 0 && x_max <= size.width && y_max <= size.height;
  }
  bool contains(int x, int y) const { return x >= x_min && x < x_max && y >= y_min && y < y_max; }

  friend bool operator==(const Box&, const Box&) = default;
};

struct LabeledBox {
  int class_id = 0;
  Box box;

  friend bool operator==(const LabeledBox&, const LabeledBox&) = default;
};

struct PointPrediction {
  int class_id = 0;
  int x = 0;
  int y = 0;
  double score = 0.0;
};

struct BoxPrediction {
  int class_id = 0;
  Box box;
  double score = 0.0;
};

enum class Connectivity { Four, Eight };

/// Which values the 10%-of-maximum rule is applied to. Probability: the map
/// holds sigmoid outputs and a pixel is foreground when p > frac * max.
/// Activation: the map holds raw activations, shifted so its minimum is 0
/// before applying the same rule.
enum class ThresholdDomain { Probability, Activation };

struct BoxOptions {
  double threshold_frac = 0.10;
  Connectivity connectivity = Connectivity::Four;
  ThresholdDomain domain = ThresholdDomain::Probability;
};

/// Element-wise sigmoid of every channel.
Tensor cam_probabilities(const ClassActivationMap& cam);

/// Arg-max of one channel (first in row-major order on ties), converted to
/// image coordinates by the cell-centre rule x = floor((j + 0.5) W / w).
PointPrediction predict_point(const Tensor& prob_map, int class_id, ImageSize image_size);

/// Foreground mask (h*w bytes, row-major) for one channel.
std::vector<std::uint8_t> foreground_mask(const Tensor& map, int class_id, const BoxOptions& options);

/// Pixels (row-major flat indices, ascending) of the largest connected
/// component of `mask`; ties go to the component holding the smallest
/// index. Empty when the mask has no foreground.
std::vector<std::size_t> largest_component(std::span<const std::uint8_t> mask, std::size_t height,
                                           std::size_t width, Connectivity connectivity);

/// Cell span of map cell range [c0, c1) on an axis, scaled to the image.
int map_to_image_edge(int cell_edge, int map_extent, int image_extent);

/// Tight box around the largest foreground component, scaled from map
/// cells to the image pixels they cover. nullopt when the channel has no
/// positive maximum (never the case for sigmoid output).
std::optional<BoxPrediction> predict_box(const Tensor& map, int class_id, ImageSize image_size,
                                         const BoxOptions& options = {});

double iou(const Box& a, const Box& b);

/// True when the point lies in any of `gt_boxes` grown by tolerance_px on
/// each side.
bool point_hit(const PointPrediction& p, std::span<const Box> gt_boxes, int tolerance_px);

/// 18 px at the 512 px reference scale, scaled linearly to the shorter
/// image side.
int scaled_point_tolerance(ImageSize image_size);

}  // namespace wsod
