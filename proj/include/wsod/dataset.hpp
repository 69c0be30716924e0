#pragma once

// Deterministic synthetic-shapes dataset and its on-disk format.
//
// On disk (see docs/formats.md for the byte-level description):
//   <root>/manifest.txt
//   <root>/<split>/annotations.json
//   <root>/<split>/images/<id>.ppm
// with split in {train, eval}.

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "wsod/detection.hpp"
#include "wsod/pyramid.hpp"
#include "wsod/tensor.hpp"

namespace wsod {

struct Point {
  int x = 0;
  int y = 0;

  friend bool operator==(const Point&, const Point&) = default;
};

struct Instance {
  int class_id = 0;
  Box box;
  /// Click annotation; the shape centroid (or nearest shape pixel to it).
  Point point;
  /// False once a geometric augmentation has moved the point out of frame.
  bool point_visible = true;

  friend bool operator==(const Instance&, const Instance&) = default;
};

struct Sample {
  std::string id;
  Tensor image;  // 3 x H x W, values in [0, 1]
  std::vector<Instance> instances;

  ImageSize size() const {
    return {static_cast<int>(image.dim(2)), static_cast<int>(image.dim(1))};
  }
  std::set<int> classes() const;
  std::vector<LabeledPoint> visible_points() const;
  std::vector<Box> boxes_of(int class_id) const;

  /// Throws unless every box is valid and inside the image and every visible
  /// point lies inside its box.
  void validate(int class_count) const;

  friend bool operator==(const Sample&, const Sample&) = default;
};

enum class BiasPreset { Uniform, Correlated };

struct DatasetConfig {
  ImageSize image_size{64, 64};
  int class_count = 4;
  int train_images = 600;
  int eval_images = 200;
  int max_objects = 3;
  double min_size_frac = 0.15;
  double max_size_frac = 0.35;
  double max_overlap_iou = 0.2;
  double noise_sigma = 0.03;
  /// class_count x class_count pair-preference weights.
  Matrix cooccurrence_bias = Matrix::Ones(4, 4);
  std::uint64_t seed = 1;

  void validate() const;
};

Matrix bias_matrix(BiasPreset preset, int class_count);
std::string class_name(int class_id);

/// Probability of each class subset S (|S| in [1, max_objects]) used by the
/// generator: proportional to size_mass(|S|) / binom(C, |S|) times the
/// product of pair weights inside S.
struct SubsetDistribution {
  std::vector<std::vector<int>> subsets;
  std::vector<double> probabilities;
};
SubsetDistribution subset_distribution(const DatasetConfig& config);

/// In-memory generation of one split ("train" or "eval"). Pixel values are
/// already quantized to byte / 255, so saving and loading is lossless.
std::vector<Sample> generate_split(const DatasetConfig& config, const std::string& split);

struct DatasetManifest {
  std::string text;
  std::uint64_t content_hash = 0;
};

/// Writes both splits and the manifest under `root`.
DatasetManifest generate_dataset(const DatasetConfig& config, const std::filesystem::path& root,
                                 const std::string& config_echo = {});

void write_split(const std::filesystem::path& split_dir, const std::vector<Sample>& samples,
                 int class_count);
std::vector<Sample> load_dataset(const std::filesystem::path& split_dir);

/// Class count recorded in a split's annotations.
int dataset_class_count(const std::filesystem::path& split_dir);

/// FNV-1a over the annotations file and then every image file in listing
/// order.
std::uint64_t split_content_hash(const std::filesystem::path& split_dir);

}  // namespace wsod
