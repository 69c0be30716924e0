#pragma once

// Average precision and the three evaluation protocols: classification
// mAP (image level and per 2x2 tile), point-localization mAP and CorLoc.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wsod/detection.hpp"
#include "wsod/pyramid.hpp"

namespace wsod {

struct ScoredItem {
  double score = 0.0;
  bool positive = false;
};

enum class ApVariant { AllPoint, ElevenPoint };

/// Ranks by descending score (stable for ties) and averages the precision
/// at each positive rank over positive_count. nullopt when positive_count
/// is 0: the class is undefined and left out of means.
std::optional<double> average_precision(std::span<const ScoredItem> scored, std::size_t positive_count,
                                        ApVariant variant = ApVariant::AllPoint);

/// Per-class values plus their mean over the defined classes.
struct ClassMetric {
  std::vector<std::optional<double>> per_class;
  std::optional<double> mean;
};

std::optional<double> mean_of_defined(std::span<const std::optional<double>> values);

struct ClassificationResult {
  ClassMetric image_level;
  /// One entry per tile of the 2x2 level, row-major.
  std::vector<ClassMetric> tiles;
  /// Mean over tiles of each tile's class mean.
  std::optional<double> tile_mean;
};

/// `pooled` and `labels` hold one pyramid vector per image (same spec).
/// Scores are ranked after the sigmoid. Tiles are evaluated only when the
/// spec contains level 2.
ClassificationResult classification_map(std::span<const Vector> pooled,
                                        std::span<const BitVector> labels, const PyramidSpec& spec,
                                        ApVariant variant = ApVariant::AllPoint);

/// Ground truth of one image for localization metrics.
struct ImageTruth {
  std::vector<LabeledBox> boxes;

  bool has_class(int class_id) const;
  std::vector<Box> boxes_of(int class_id) const;
};

/// `points[i]` holds the predictions for image i (one per class at most).
/// A prediction is positive when it hits a ground-truth box of its class.
/// positive_count is the number of images that contain the class.
ClassMetric pointloc_map(std::span<const std::vector<PointPrediction>> points,
                         std::span<const ImageTruth> truth, int class_count, int tolerance_px,
                         ApVariant variant = ApVariant::AllPoint);

struct CorLocResult {
  ClassMetric per_class;
  /// Correct pairs over all present (image, class) pairs.
  std::optional<double> pooled;
};

/// Only (image, class) pairs with the class present count. A pair is correct
/// when its predicted box has IoU > threshold (>= when strict is false) with
/// some ground-truth box of the class; a missing prediction is incorrect.
CorLocResult corloc(std::span<const std::vector<BoxPrediction>> boxes,
                    std::span<const ImageTruth> truth, int class_count, double iou_threshold = 0.5,
                    bool strict = true);

/// Ordered metric rows, rendered as an aligned table and as
/// `metric=<name> class=<k|mean> value=<v>` records.
class MetricReport {
 public:
  void add(const std::string& metric, const std::string& class_label, std::optional<double> value);
  void add(const std::string& metric, const ClassMetric& values);

  std::string table() const;
  std::string records() const;

  struct Row {
    std::string metric;
    std::string class_label;
    std::optional<double> value;
  };
  const std::vector<Row>& rows() const { return rows_; }
  std::optional<double> find(const std::string& metric, const std::string& class_label) const;

 private:
  std::vector<Row> rows_;
};

}  // namespace wsod
