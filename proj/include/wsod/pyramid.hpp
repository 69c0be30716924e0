#pragma once

// Spatial-pyramid label encoding and average pooling of class activation
// maps.
//
// Vector layout (labels and pooled scores alike): level-major, then tiles in
// row-major order within the level, then class index within the tile. With
// the default levels {1, 2} and C classes this is 5C entries:
//   [image-level C][tile(0,0) C][tile(0,1) C][tile(1,0) C][tile(1,1) C]

#include <cstddef>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "wsod/tensor.hpp"

namespace wsod {

/// A C x H x W map of pre-sigmoid class activations.
using ClassActivationMap = Tensor;

struct ImageSize {
  int width = 0;
  int height = 0;

  friend bool operator==(const ImageSize&, const ImageSize&) = default;
};

class PyramidSpec {
 public:
  PyramidSpec(std::vector<int> levels, int class_count);

  static PyramidSpec image_level(int class_count) { return PyramidSpec({1}, class_count); }
  static PyramidSpec two_level(int class_count) { return PyramidSpec({1, 2}, class_count); }

  const std::vector<int>& levels() const { return levels_; }
  int class_count() const { return class_count_; }
  int max_level() const { return levels_.back(); }
  std::size_t total_dim() const { return total_dim_; }

  /// Flat index of (level position, tile row, tile column, class).
  std::size_t index(std::size_t level_pos, int row, int col, int class_id) const;
  std::size_t level_offset(std::size_t level_pos) const { return offsets_[level_pos]; }

  friend bool operator==(const PyramidSpec& a, const PyramidSpec& b) {
    return a.levels_ == b.levels_ && a.class_count_ == b.class_count_;
  }

 private:
  std::vector<int> levels_;
  int class_count_;
  std::vector<std::size_t> offsets_;
  std::size_t total_dim_;
};

/// Half-open pixel range [begin, end) of tile `tile` out of `level` along an
/// axis of length `extent`.
struct TileRange {
  std::size_t begin;
  std::size_t end;
};
TileRange tile_range(std::size_t extent, int level, int tile);

/// Tile coordinate of pixel coordinate `coord` on an axis of length `extent`.
int tile_of(int coord, int extent, int level);

struct PyramidLabelVector {
  PyramidSpec spec;
  BitVector bits;

  /// Every class set at a finer level is also set at level 1.
  bool satisfies_hierarchy() const;
  std::size_t set_count() const;
};

struct LabeledPoint {
  int class_id = 0;
  int x = 0;
  int y = 0;

  friend bool operator==(const LabeledPoint&, const LabeledPoint&) = default;
};

PyramidLabelVector encode_image_labels(const std::set<int>& present_classes,
                                       const PyramidSpec& spec);

/// Sets the level-1 bit of every point's class and, at each finer level, the
/// bit of the tile containing the point.
PyramidLabelVector encode_point_labels(std::span<const LabeledPoint> points, ImageSize image_size,
                                       const PyramidSpec& spec);

/// Per (level, tile, class) mean of the map over the tile's pixels.
Vector spp_average_pool(const ClassActivationMap& cam, const PyramidSpec& spec);

/// Adjoint of spp_average_pool: each output gradient is spread uniformly
/// over its tile; contributions from different levels add up.
ClassActivationMap spp_average_pool_backward(const Vector& grad_pooled, const Shape& cam_shape,
                                             const PyramidSpec& spec);

/// `spec=<l1,l2,...> C=<n> <bits>` on one line.
std::string format_label_vector(const PyramidLabelVector& labels);
PyramidLabelVector parse_label_vector(const std::string& line);

Vector to_real(const BitVector& bits);

}  // namespace wsod
