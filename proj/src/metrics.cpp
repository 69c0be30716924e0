#include "wsod/metrics.hpp"

#include <algorithm>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "wsod/layers.hpp"
#include "wsod/text_format.hpp"

namespace wsod {

std::optional<double> average_precision(std::span<const ScoredItem> scored, std::size_t positive_count,
                                        ApVariant variant) {
  if (positive_count == 0) return std::nullopt;
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scored[a].score > scored[b].score; });

  const double total = static_cast<double>(positive_count);
  std::vector<double> precision_at_hit;
  std::size_t hits = 0;
  for (std::size_t rank = 0; rank < order.size(); ++rank) {
    if (!scored[order[rank]].positive) continue;
    ++hits;
    precision_at_hit.push_back(static_cast<double>(hits) / static_cast<double>(rank + 1));
  }
  if (hits > positive_count) {
    throw std::invalid_argument("average_precision: more positives than positive_count");
  }

  if (variant == ApVariant::AllPoint) {
    return std::accumulate(precision_at_hit.begin(), precision_at_hit.end(), 0.0) / total;
  }
  // Eleven-point interpolation: max precision at recall >= t.
  double sum = 0.0;
  for (int step = 0; step <= 10; ++step) {
    const double t = step / 10.0;
    double best = 0.0;
    for (std::size_t k = 0; k < precision_at_hit.size(); ++k) {
      if (static_cast<double>(k + 1) / total >= t - 1e-12) {
        best = std::max(best, precision_at_hit[k]);
      }
    }
    sum += best;
  }
  return sum / 11.0;
}

std::optional<double> mean_of_defined(std::span<const std::optional<double>> values) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& v : values) {
    if (!v) continue;
    sum += *v;
    ++n;
  }
  if (n == 0) return std::nullopt;
  return sum / static_cast<double>(n);
}

namespace {

ClassMetric rank_entries(std::span<const Vector> pooled, std::span<const BitVector> labels,
                         const PyramidSpec& spec, std::size_t level_pos, int row, int col,
                         ApVariant variant) {
  ClassMetric out;
  for (int k = 0; k < spec.class_count(); ++k) {
    const std::size_t idx = spec.index(level_pos, row, col, k);
    std::vector<ScoredItem> items(pooled.size());
    std::size_t positives = 0;
    for (std::size_t i = 0; i < pooled.size(); ++i) {
      items[i] = {sigmoid(pooled[i](static_cast<Eigen::Index>(idx))), labels[i][idx] != 0};
      positives += items[i].positive ? 1 : 0;
    }
    out.per_class.push_back(average_precision(items, positives, variant));
  }
  out.mean = mean_of_defined(out.per_class);
  return out;
}

}  // namespace

ClassificationResult classification_map(std::span<const Vector> pooled,
                                        std::span<const BitVector> labels, const PyramidSpec& spec,
                                        ApVariant variant) {
  if (pooled.size() != labels.size()) {
    throw std::invalid_argument("classification_map: score and label counts differ");
  }
  for (std::size_t i = 0; i < pooled.size(); ++i) {
    if (static_cast<std::size_t>(pooled[i].size()) != spec.total_dim() ||
        labels[i].size() != spec.total_dim()) {
      throw std::invalid_argument("classification_map: vector " + std::to_string(i) +
                                  " does not match the pyramid dimension");
    }
  }
  ClassificationResult result;
  result.image_level = rank_entries(pooled, labels, spec, 0, 0, 0, variant);

  const auto& levels = spec.levels();
  const auto it = std::find(levels.begin(), levels.end(), 2);
  if (it != levels.end()) {
    const auto pos = static_cast<std::size_t>(it - levels.begin());
    std::vector<std::optional<double>> tile_means;
    for (int row = 0; row < 2; ++row) {
      for (int col = 0; col < 2; ++col) {
        result.tiles.push_back(rank_entries(pooled, labels, spec, pos, row, col, variant));
        tile_means.push_back(result.tiles.back().mean);
      }
    }
    result.tile_mean = mean_of_defined(tile_means);
  }
  return result;
}

bool ImageTruth::has_class(int class_id) const {
  return std::any_of(boxes.begin(), boxes.end(),
                     [&](const LabeledBox& b) { return b.class_id == class_id; });
}

std::vector<Box> ImageTruth::boxes_of(int class_id) const {
  std::vector<Box> out;
  for (const LabeledBox& b : boxes) {
    if (b.class_id == class_id) out.push_back(b.box);
  }
  return out;
}

ClassMetric pointloc_map(std::span<const std::vector<PointPrediction>> points,
                         std::span<const ImageTruth> truth, int class_count, int tolerance_px,
                         ApVariant variant) {
  if (points.size() != truth.size()) {
    throw std::invalid_argument("pointloc_map: prediction and truth counts differ");
  }
  ClassMetric out;
  for (int k = 0; k < class_count; ++k) {
    std::vector<ScoredItem> items;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::vector<Box> gt = truth[i].boxes_of(k);
      if (!gt.empty()) ++positives;
      for (const PointPrediction& p : points[i]) {
        if (p.class_id != k) continue;
        items.push_back({p.score, point_hit(p, gt, tolerance_px)});
      }
    }
    out.per_class.push_back(average_precision(items, positives, variant));
  }
  out.mean = mean_of_defined(out.per_class);
  return out;
}

CorLocResult corloc(std::span<const std::vector<BoxPrediction>> boxes,
                    std::span<const ImageTruth> truth, int class_count, double iou_threshold,
                    bool strict) {
  if (boxes.size() != truth.size()) {
    throw std::invalid_argument("corloc: prediction and truth counts differ");
  }
  CorLocResult result;
  std::size_t all_present = 0, all_correct = 0;
  for (int k = 0; k < class_count; ++k) {
    std::size_t present = 0, correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      const std::vector<Box> gt = truth[i].boxes_of(k);
      if (gt.empty()) continue;
      ++present;
      const auto pred = std::find_if(boxes[i].begin(), boxes[i].end(),
                                     [&](const BoxPrediction& b) { return b.class_id == k; });
      if (pred == boxes[i].end()) continue;
      const bool ok = std::any_of(gt.begin(), gt.end(), [&](const Box& g) {
        const double v = iou(pred->box, g);
        return strict ? v > iou_threshold : v >= iou_threshold;
      });
      correct += ok ? 1 : 0;
    }
    all_present += present;
    all_correct += correct;
    result.per_class.per_class.push_back(
        present == 0 ? std::nullopt
                     : std::optional<double>(static_cast<double>(correct) / static_cast<double>(present)));
  }
  result.per_class.mean = mean_of_defined(result.per_class.per_class);
  if (all_present > 0) {
    result.pooled = static_cast<double>(all_correct) / static_cast<double>(all_present);
  }
  return result;
}

void MetricReport::add(const std::string& metric, const std::string& class_label,
                       std::optional<double> value) {
  rows_.push_back({metric, class_label, value});
}

void MetricReport::add(const std::string& metric, const ClassMetric& values) {
  for (std::size_t k = 0; k < values.per_class.size(); ++k) {
    add(metric, std::to_string(k), values.per_class[k]);
  }
  add(metric, "mean", values.mean);
}

namespace {

std::string value_text(const std::optional<double>& v) {
  return v ? format_fixed(*v, 6) : std::string("undefined");
}

}  // namespace

std::string MetricReport::table() const {
  std::size_t w_metric = 6, w_class = 5;
  for (const Row& r : rows_) {
    w_metric = std::max(w_metric, r.metric.size());
    w_class = std::max(w_class, r.class_label.size());
  }
  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(w_metric)) << "metric" << "  "
      << std::setw(static_cast<int>(w_class)) << "class" << "  value\n";
  for (const Row& r : rows_) {
    out << std::left << std::setw(static_cast<int>(w_metric)) << r.metric << "  "
        << std::setw(static_cast<int>(w_class)) << r.class_label << "  " << value_text(r.value)
        << "\n";
  }
  return out.str();
}

std::string MetricReport::records() const {
  std::string out;
  for (const Row& r : rows_) {
    out += "metric=" + r.metric + " class=" + r.class_label + " value=" + value_text(r.value) + "\n";
  }
  return out;
}

std::optional<double> MetricReport::find(const std::string& metric,
                                         const std::string& class_label) const {
  for (const Row& r : rows_) {
    if (r.metric == metric && r.class_label == class_label) return r.value;
  }
  return std::nullopt;
}

}  // namespace wsod
