#include "wsod/pyramid.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "wsod/text_format.hpp"

namespace wsod {

PyramidSpec::PyramidSpec(std::vector<int> levels, int class_count)
    : levels_(std::move(levels)), class_count_(class_count) {
  if (levels_.empty()) throw std::invalid_argument("pyramid: no levels");
  if (levels_.front() != 1) throw std::invalid_argument("pyramid: first level must be 1");
  for (std::size_t i = 1; i < levels_.size(); ++i) {
    if (levels_[i] <= levels_[i - 1]) {
      throw std::invalid_argument("pyramid: levels must be strictly increasing");
    }
  }
  if (class_count_ < 1) throw std::invalid_argument("pyramid: class_count must be >= 1");
  std::size_t offset = 0;
  for (int l : levels_) {
    offsets_.push_back(offset);
    offset += static_cast<std::size_t>(l * l * class_count_);
  }
  total_dim_ = offset;
}

std::size_t PyramidSpec::index(std::size_t level_pos, int row, int col, int class_id) const {
  const int l = levels_.at(level_pos);
  return offsets_[level_pos] + static_cast<std::size_t>((row * l + col) * class_count_ + class_id);
}

TileRange tile_range(std::size_t extent, int level, int tile) {
  const auto l = static_cast<std::size_t>(level);
  const auto t = static_cast<std::size_t>(tile);
  return {t * extent / l, (t + 1) * extent / l};
}

int tile_of(int coord, int extent, int level) {
  const long t = static_cast<long>(coord) * level / extent;
  return static_cast<int>(std::min<long>(t, level - 1));
}

bool PyramidLabelVector::satisfies_hierarchy() const {
  const int c_count = spec.class_count();
  for (std::size_t lp = 1; lp < spec.levels().size(); ++lp) {
    const int l = spec.levels()[lp];
    for (int r = 0; r < l; ++r)
      for (int c = 0; c < l; ++c)
        for (int k = 0; k < c_count; ++k)
          if (bits[spec.index(lp, r, c, k)] && !bits[spec.index(0, 0, 0, k)]) return false;
  }
  return true;
}

std::size_t PyramidLabelVector::set_count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

PyramidLabelVector encode_image_labels(const std::set<int>& present_classes,
                                       const PyramidSpec& spec) {
  PyramidLabelVector out{spec, BitVector(spec.total_dim(), 0)};
  for (int k : present_classes) {
    if (k < 0 || k >= spec.class_count()) {
      throw std::invalid_argument("encode_image_labels: class " + std::to_string(k) +
                                  " out of range");
    }
    out.bits[spec.index(0, 0, 0, k)] = 1;
  }
  return out;
}

PyramidLabelVector encode_point_labels(std::span<const LabeledPoint> points, ImageSize image_size,
                                       const PyramidSpec& spec) {
  PyramidLabelVector out{spec, BitVector(spec.total_dim(), 0)};
  for (const LabeledPoint& p : points) {
    if (p.class_id < 0 || p.class_id >= spec.class_count()) {
      throw std::invalid_argument("encode_point_labels: class " + std::to_string(p.class_id) +
                                  " out of range");
    }
    if (p.x < 0 || p.y < 0 || p.x >= image_size.width || p.y >= image_size.height) {
      throw std::invalid_argument("encode_point_labels: point (" + std::to_string(p.x) + ", " +
                                  std::to_string(p.y) + ") outside image");
    }
    for (std::size_t lp = 0; lp < spec.levels().size(); ++lp) {
      const int l = spec.levels()[lp];
      const int row = tile_of(p.y, image_size.height, l);
      const int col = tile_of(p.x, image_size.width, l);
      out.bits[spec.index(lp, row, col, p.class_id)] = 1;
    }
  }
  return out;
}

namespace {

void check_cam(const ClassActivationMap& cam, const PyramidSpec& spec) {
  if (cam.rank() != 3) throw std::invalid_argument("spp: expected a C x H x W map");
  if (static_cast<int>(cam.dim(0)) != spec.class_count()) {
    throw std::invalid_argument("spp: map has " + std::to_string(cam.dim(0)) +
                                " channels, pyramid expects " +
                                std::to_string(spec.class_count()));
  }
  const auto max_level = static_cast<std::size_t>(spec.max_level());
  if (cam.dim(1) < max_level || cam.dim(2) < max_level) {
    throw std::invalid_argument("spp: map " + shape_string(cam.shape()) +
                                " smaller than pyramid level " + std::to_string(max_level));
  }
}

}  // namespace

Vector spp_average_pool(const ClassActivationMap& cam, const PyramidSpec& spec) {
  check_cam(cam, spec);
  const std::size_t h = cam.dim(1), w = cam.dim(2);
  Vector out(static_cast<Eigen::Index>(spec.total_dim()));
  for (std::size_t lp = 0; lp < spec.levels().size(); ++lp) {
    const int l = spec.levels()[lp];
    for (int r = 0; r < l; ++r) {
      const TileRange rows = tile_range(h, l, r);
      for (int c = 0; c < l; ++c) {
        const TileRange cols = tile_range(w, l, c);
        const double count = static_cast<double>((rows.end - rows.begin) * (cols.end - cols.begin));
        for (int k = 0; k < spec.class_count(); ++k) {
          double sum = 0.0;
          for (std::size_t y = rows.begin; y < rows.end; ++y)
            for (std::size_t x = cols.begin; x < cols.end; ++x) sum += cam.at(k, y, x);
          out(static_cast<Eigen::Index>(spec.index(lp, r, c, k))) = sum / count;
        }
      }
    }
  }
  return out;
}

ClassActivationMap spp_average_pool_backward(const Vector& grad_pooled, const Shape& cam_shape,
                                             const PyramidSpec& spec) {
  ClassActivationMap grad(cam_shape);
  check_cam(grad, spec);
  if (static_cast<std::size_t>(grad_pooled.size()) != spec.total_dim()) {
    throw std::invalid_argument("spp backward: gradient length mismatch");
  }
  const std::size_t h = cam_shape[1], w = cam_shape[2];
  for (std::size_t lp = 0; lp < spec.levels().size(); ++lp) {
    const int l = spec.levels()[lp];
    for (int r = 0; r < l; ++r) {
      const TileRange rows = tile_range(h, l, r);
      for (int c = 0; c < l; ++c) {
        const TileRange cols = tile_range(w, l, c);
        const double count = static_cast<double>((rows.end - rows.begin) * (cols.end - cols.begin));
        for (int k = 0; k < spec.class_count(); ++k) {
          const double g = grad_pooled(static_cast<Eigen::Index>(spec.index(lp, r, c, k))) / count;
          for (std::size_t y = rows.begin; y < rows.end; ++y)
            for (std::size_t x = cols.begin; x < cols.end; ++x) grad.at(k, y, x) += g;
        }
      }
    }
  }
  return grad;
}

std::string format_label_vector(const PyramidLabelVector& labels) {
  std::string out = "spec=";
  for (std::size_t i = 0; i < labels.spec.levels().size(); ++i) {
    if (i) out += ",";
    out += std::to_string(labels.spec.levels()[i]);
  }
  out += " C=" + std::to_string(labels.spec.class_count()) + " ";
  for (std::uint8_t b : labels.bits) out += b ? '1' : '0';
  return out;
}

PyramidLabelVector parse_label_vector(const std::string& line) {
  std::istringstream in(line);
  std::string spec_tok, class_tok, bits_tok, extra;
  if (!(in >> spec_tok >> class_tok >> bits_tok) || (in >> extra)) {
    throw std::runtime_error("label vector: expected 'spec=<levels> C=<n> <bits>'");
  }
  if (spec_tok.rfind("spec=", 0) != 0 || class_tok.rfind("C=", 0) != 0) {
    throw std::runtime_error("label vector: malformed prefix");
  }
  std::vector<int> levels;
  std::istringstream lv(spec_tok.substr(5));
  for (std::string part; std::getline(lv, part, ',');) {
    levels.push_back(static_cast<int>(parse_integer(part, "pyramid level")));
  }
  const int c = static_cast<int>(parse_integer(class_tok.substr(2), "class count"));
  PyramidSpec spec(std::move(levels), c);
  if (bits_tok.size() != spec.total_dim()) {
    throw std::runtime_error("label vector: " + std::to_string(bits_tok.size()) +
                             " bits, expected " + std::to_string(spec.total_dim()));
  }
  BitVector bits(bits_tok.size());
  for (std::size_t i = 0; i < bits_tok.size(); ++i) {
    if (bits_tok[i] != '0' && bits_tok[i] != '1') {
      throw std::runtime_error("label vector: invalid bit character");
    }
    bits[i] = bits_tok[i] == '1';
  }
  return {std::move(spec), std::move(bits)};
}

Vector to_real(const BitVector& bits) {
  Vector v(static_cast<Eigen::Index>(bits.size()));
  for (std::size_t i = 0; i < bits.size(); ++i) v(static_cast<Eigen::Index>(i)) = bits[i];
  return v;
}

}  // namespace wsod
