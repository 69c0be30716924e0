#pragma once

// Runs a trained network over a split and scores it with the metrics
// module. Also reads and writes the line-based prediction dump.

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "wsod/dataset.hpp"
#include "wsod/detection.hpp"
#include "wsod/metrics.hpp"
#include "wsod/network.hpp"

namespace wsod {

enum class EvalTask { Classify, PointLoc, CorLoc };

std::string to_string(EvalTask task);

struct EvaluationOptions {
  BoxOptions box;
  /// Negative: scaled_point_tolerance of the image size.
  int point_tolerance_px = -1;
  double iou_threshold = 0.5;
  bool strict_iou = true;
  ApVariant ap_variant = ApVariant::AllPoint;
};

/// Everything read off one image's CAM: the {1, 2} pyramid pooled scores
/// and one point and one box per class.
struct ImagePredictions {
  std::string image_id;
  Vector pooled;
  std::vector<PointPrediction> points;
  std::vector<BoxPrediction> boxes;
};

/// Parallel over images; the result order follows `samples`.
std::vector<ImagePredictions> predict_images(const Network& net, std::span<const Sample> samples,
                                             const BoxOptions& box_options = {});

ImageTruth truth_of(const Sample& sample);

MetricReport evaluate(EvalTask task, std::span<const ImagePredictions> predictions,
                      std::span<const Sample> samples, int class_count,
                      const EvaluationOptions& options = {});

/// Records of the given task's predictions (points for pointloc, boxes for
/// corloc, nothing for classify):
///   image=<id> class=<k> kind=point x=<x> y=<y> score=<s>
///   image=<id> class=<k> kind=box x0=<..> y0=<..> x1=<..> y1=<..> score=<s>
std::string format_predictions(std::span<const ImagePredictions> predictions, EvalTask task);

struct PredictionRecord {
  std::string image_id;
  int class_id = 0;
  bool is_box = false;
  PointPrediction point;
  BoxPrediction box;
};

/// Throws std::runtime_error naming the line on malformed input.
std::vector<PredictionRecord> parse_predictions(std::istream& in);

}  // namespace wsod
