#include "wsod/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace wsod {

namespace {

Box clip_box(Box b, ImageSize sz) {
  b.x_min = std::clamp(b.x_min, 0, sz.width - 1);
  b.y_min = std::clamp(b.y_min, 0, sz.height - 1);
  b.x_max = std::clamp(b.x_max, b.x_min + 1, sz.width);
  b.y_max = std::clamp(b.y_max, b.y_min + 1, sz.height);
  return b;
}

bool in_frame(Point p, ImageSize sz) {
  return p.x >= 0 && p.y >= 0 && p.x < sz.width && p.y < sz.height;
}

}  // namespace

AugmentationConfig AugmentationConfig::disabled() {
  AugmentationConfig c;
  c.translate = c.rotate = c.noise = c.mirror = false;
  return c;
}

void AugmentationConfig::validate() const {
  if (!(max_translation_frac >= 0 && max_translation_frac <= 1)) {
    throw std::invalid_argument("augmentation: max_translation_frac must be in [0, 1]");
  }
  if (!(mirror_prob >= 0 && mirror_prob <= 1)) {
    throw std::invalid_argument("augmentation: mirror_prob must be in [0, 1]");
  }
  if (!(gaussian_noise_sigma >= 0)) throw std::invalid_argument("augmentation: sigma must be >= 0");
  if (!(max_rotation_deg >= 0)) throw std::invalid_argument("augmentation: rotation must be >= 0");
}

Sample translate(const Sample& sample, int dx, int dy) {
  const ImageSize sz = sample.size();
  Sample out = sample;
  for (std::size_t c = 0; c < 3; ++c)
    for (int y = 0; y < sz.height; ++y)
      for (int x = 0; x < sz.width; ++x) {
        const int sx = std::clamp(x - dx, 0, sz.width - 1);
        const int sy = std::clamp(y - dy, 0, sz.height - 1);
        out.image.at(c, y, x) = sample.image.at(c, sy, sx);
      }
  for (Instance& inst : out.instances) {
    inst.box = clip_box({inst.box.x_min + dx, inst.box.y_min + dy, inst.box.x_max + dx,
                         inst.box.y_max + dy},
                        sz);
    inst.point = {inst.point.x + dx, inst.point.y + dy};
    inst.point_visible = inst.point_visible && in_frame(inst.point, sz);
  }
  return out;
}

Sample rotate(const Sample& sample, double degrees) {
  const ImageSize sz = sample.size();
  const double theta = degrees * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double cx = (sz.width - 1) / 2.0, cy = (sz.height - 1) / 2.0;
  auto forward = [&](double x, double y) {
    const double rx = x - cx, ry = y - cy;
    return std::pair{cos_t * rx + sin_t * ry + cx, -sin_t * rx + cos_t * ry + cy};
  };

  Sample out = sample;
  for (int y = 0; y < sz.height; ++y) {
    for (int x = 0; x < sz.width; ++x) {
      // Inverse map: rotate the output pixel back by -theta.
      const double rx = x - cx, ry = y - cy;
      const double sx = cos_t * rx - sin_t * ry + cx;
      const double sy = sin_t * rx + cos_t * ry + cy;
      const int ix = std::clamp(static_cast<int>(std::lround(sx)), 0, sz.width - 1);
      const int iy = std::clamp(static_cast<int>(std::lround(sy)), 0, sz.height - 1);
      for (std::size_t c = 0; c < 3; ++c) out.image.at(c, y, x) = sample.image.at(c, iy, ix);
    }
  }
  for (Instance& inst : out.instances) {
    const Box& b = inst.box;
    double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
    for (double px : {static_cast<double>(b.x_min), static_cast<double>(b.x_max - 1)}) {
      for (double py : {static_cast<double>(b.y_min), static_cast<double>(b.y_max - 1)}) {
        const auto [rx, ry] = forward(px, py);
        x0 = std::min(x0, rx);
        x1 = std::max(x1, rx);
        y0 = std::min(y0, ry);
        y1 = std::max(y1, ry);
      }
    }
    inst.box = clip_box({static_cast<int>(std::lround(x0)), static_cast<int>(std::lround(y0)),
                         static_cast<int>(std::lround(x1)) + 1, static_cast<int>(std::lround(y1)) + 1},
                        sz);
    const auto [px, py] = forward(inst.point.x, inst.point.y);
    inst.point = {static_cast<int>(std::lround(px)), static_cast<int>(std::lround(py))};
    inst.point_visible = inst.point_visible && in_frame(inst.point, sz);
  }
  return out;
}

Sample mirror(const Sample& sample) {
  const ImageSize sz = sample.size();
  Sample out = sample;
  for (std::size_t c = 0; c < 3; ++c)
    for (int y = 0; y < sz.height; ++y)
      for (int x = 0; x < sz.width; ++x)
        out.image.at(c, y, x) = sample.image.at(c, y, sz.width - 1 - x);
  for (Instance& inst : out.instances) {
    inst.box = {sz.width - inst.box.x_max, inst.box.y_min, sz.width - inst.box.x_min, inst.box.y_max};
    inst.point.x = sz.width - 1 - inst.point.x;
  }
  return out;
}

Sample add_noise(const Sample& sample, double sigma, std::mt19937_64& rng) {
  Sample out = sample;
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : out.image.values()) v = std::clamp(v + sigma * n(rng), 0.0, 1.0);
  return out;
}

Sample augment(const Sample& sample, const AugmentationConfig& config, std::mt19937_64& rng) {
  config.validate();
  std::uniform_real_distribution<double> sym(-1.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const ImageSize sz = sample.size();
  Sample out = sample;
  if (config.translate) {
    const int dx = static_cast<int>(std::lround(sym(rng) * config.max_translation_frac * sz.width));
    const int dy = static_cast<int>(std::lround(sym(rng) * config.max_translation_frac * sz.height));
    out = translate(out, dx, dy);
  }
  if (config.rotate) out = rotate(out, sym(rng) * config.max_rotation_deg);
  if (config.noise) out = add_noise(out, config.gaussian_noise_sigma, rng);
  if (config.mirror && unit(rng) < config.mirror_prob) out = mirror(out);
  return out;
}

}  // namespace wsod
