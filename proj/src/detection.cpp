#include "wsod/detection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "wsod/layers.hpp"

namespace wsod {

namespace {

void check_channel(const Tensor& map, int class_id) {
  if (map.rank() != 3) throw std::invalid_argument("detection: expected a C x H x W map");
  if (class_id < 0 || static_cast<std::size_t>(class_id) >= map.dim(0)) {
    throw std::invalid_argument("detection: class " + std::to_string(class_id) +
                                " out of range for map with " + std::to_string(map.dim(0)) +
                                " channels");
  }
}

}  // namespace

Tensor cam_probabilities(const ClassActivationMap& cam) { return sigmoid_forward(cam); }

PointPrediction predict_point(const Tensor& prob_map, int class_id, ImageSize image_size) {
  check_channel(prob_map, class_id);
  const std::size_t h = prob_map.dim(1), w = prob_map.dim(2);
  std::size_t best_y = 0, best_x = 0;
  double best = prob_map.at(class_id, 0, 0);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      if (prob_map.at(class_id, y, x) > best) {
        best = prob_map.at(class_id, y, x);
        best_y = y;
        best_x = x;
      }
    }
  }
  PointPrediction p;
  p.class_id = class_id;
  p.x = static_cast<int>(std::floor((static_cast<double>(best_x) + 0.5) * image_size.width /
                                    static_cast<double>(w)));
  p.y = static_cast<int>(std::floor((static_cast<double>(best_y) + 0.5) * image_size.height /
                                    static_cast<double>(h)));
  p.score = best;
  return p;
}

std::vector<std::uint8_t> foreground_mask(const Tensor& map, int class_id,
                                          const BoxOptions& options) {
  check_channel(map, class_id);
  if (!(options.threshold_frac > 0.0 && options.threshold_frac < 1.0)) {
    throw std::invalid_argument("detection: threshold_frac must be in (0, 1)");
  }
  const std::size_t n = map.dim(1) * map.dim(2);
  const double* channel = map.data() + static_cast<std::size_t>(class_id) * n;
  const double max_v = *std::max_element(channel, channel + n);
  const double shift =
      options.domain == ThresholdDomain::Activation ? *std::min_element(channel, channel + n) : 0.0;
  const double threshold = options.threshold_frac * (max_v - shift);
  std::vector<std::uint8_t> mask(n, 0);
  for (std::size_t i = 0; i < n; ++i) mask[i] = (channel[i] - shift) > threshold;
  return mask;
}

std::vector<std::size_t> largest_component(std::span<const std::uint8_t> mask, std::size_t height,
                                           std::size_t width, Connectivity connectivity) {
  if (mask.size() != height * width) throw std::invalid_argument("largest_component: mask size");
  std::vector<int> label(mask.size(), -1);
  std::vector<std::size_t> best, current, stack;
  int next_label = 0;
  // Components are discovered in row-major order of their first pixel, so a
  // strict '>' keeps the earliest one among equal sizes.
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || label[start] >= 0) continue;
    current.clear();
    stack.assign(1, start);
    label[start] = next_label;
    while (!stack.empty()) {
      const std::size_t idx = stack.back();
      stack.pop_back();
      current.push_back(idx);
      const long y = static_cast<long>(idx / width), x = static_cast<long>(idx % width);
      for (long dy = -1; dy <= 1; ++dy) {
        for (long dx = -1; dx <= 1; ++dx) {
          if (dy == 0 && dx == 0) continue;
          if (connectivity == Connectivity::Four && dy != 0 && dx != 0) continue;
          const long ny = y + dy, nx = x + dx;
          if (ny < 0 || nx < 0 || ny >= static_cast<long>(height) || nx >= static_cast<long>(width))
            continue;
          const std::size_t nidx = static_cast<std::size_t>(ny) * width + static_cast<std::size_t>(nx);
          if (mask[nidx] && label[nidx] < 0) {
            label[nidx] = next_label;
            stack.push_back(nidx);
          }
        }
      }
    }
    ++next_label;
    if (current.size() > best.size()) best = current;
  }
  std::sort(best.begin(), best.end());
  return best;
}

int map_to_image_edge(int cell_edge, int map_extent, int image_extent) {
  return static_cast<int>(static_cast<long>(cell_edge) * image_extent / map_extent);
}

std::optional<BoxPrediction> predict_box(const Tensor& map, int class_id, ImageSize image_size,
                                         const BoxOptions& options) {
  check_channel(map, class_id);
  const std::size_t h = map.dim(1), w = map.dim(2);
  const double* channel = map.data() + static_cast<std::size_t>(class_id) * h * w;
  const double max_v = *std::max_element(channel, channel + h * w);
  if (options.domain == ThresholdDomain::Probability && !(max_v > 0.0)) return std::nullopt;

  const auto mask = foreground_mask(map, class_id, options);
  auto component = largest_component(mask, h, w, options.connectivity);
  if (component.empty()) {
    // Activation domain with a constant channel: nothing exceeds the
    // threshold, so the whole map is the only sensible region.
    component.resize(h * w);
    for (std::size_t i = 0; i < component.size(); ++i) component[i] = i;
  }
  std::size_t r0 = h, r1 = 0, c0 = w, c1 = 0;
  for (std::size_t idx : component) {
    r0 = std::min(r0, idx / w);
    r1 = std::max(r1, idx / w + 1);
    c0 = std::min(c0, idx % w);
    c1 = std::max(c1, idx % w + 1);
  }
  BoxPrediction out;
  out.class_id = class_id;
  out.box = {map_to_image_edge(static_cast<int>(c0), static_cast<int>(w), image_size.width),
             map_to_image_edge(static_cast<int>(r0), static_cast<int>(h), image_size.height),
             map_to_image_edge(static_cast<int>(c1), static_cast<int>(w), image_size.width),
             map_to_image_edge(static_cast<int>(r1), static_cast<int>(h), image_size.height)};
  out.score = max_v;
  return out;
}

double iou(const Box& a, const Box& b) {
  const long ix = std::max(0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const long iy = std::max(0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const long inter = ix * iy;
  const long uni = a.area() + b.area() - inter;
  if (uni <= 0) return 0.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

bool point_hit(const PointPrediction& p, std::span<const Box> gt_boxes, int tolerance_px) {
  if (tolerance_px < 0) throw std::invalid_argument("point_hit: negative tolerance");
  return std::any_of(gt_boxes.begin(), gt_boxes.end(), [&](const Box& b) {
    return p.x >= b.x_min - tolerance_px && p.x < b.x_max + tolerance_px &&
           p.y >= b.y_min - tolerance_px && p.y < b.y_max + tolerance_px;
  });
}

int scaled_point_tolerance(ImageSize image_size) {
  const int side = std::min(image_size.width, image_size.height);
  return static_cast<int>(std::lround(18.0 * side / 512.0));
}

}  // namespace wsod
