#include "wsod/evaluation.hpp"

#include <istream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "wsod/text_format.hpp"
#include "wsod/trainer.hpp"

namespace wsod {

std::string to_string(EvalTask task) {
  switch (task) {
    case EvalTask::Classify:
      return "classify";
    case EvalTask::PointLoc:
      return "pointloc";
    case EvalTask::CorLoc:
      return "corloc";
  }
  return "unknown";
}

std::vector<ImagePredictions> predict_images(const Network& net, std::span<const Sample> samples,
                                             const BoxOptions& box_options) {
  const PyramidSpec spec = PyramidSpec::two_level(net.config().class_count);
  std::vector<ImagePredictions> out(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(samples.size()); ++i) {
    const Sample& s = samples[static_cast<std::size_t>(i)];
    const ClassActivationMap cam = forward_cam(net, s.image);
    const Tensor prob = cam_probabilities(cam);
    const Tensor& box_map = box_options.domain == ThresholdDomain::Probability ? prob : cam;
    ImagePredictions& p = out[static_cast<std::size_t>(i)];
    p.image_id = s.id;
    p.pooled = spp_average_pool(cam, spec);
    for (int k = 0; k < net.config().class_count; ++k) {
      p.points.push_back(predict_point(prob, k, s.size()));
      if (auto b = predict_box(box_map, k, s.size(), box_options)) {
        b->score = p.points.back().score;
        p.boxes.push_back(*b);
      }
    }
  }
  return out;
}

ImageTruth truth_of(const Sample& sample) {
  ImageTruth t;
  for (const Instance& inst : sample.instances) t.boxes.push_back({inst.class_id, inst.box});
  return t;
}

MetricReport evaluate(EvalTask task, std::span<const ImagePredictions> predictions,
                      std::span<const Sample> samples, int class_count,
                      const EvaluationOptions& options) {
  if (predictions.size() != samples.size()) {
    throw std::invalid_argument("evaluate: prediction and sample counts differ");
  }
  MetricReport report;
  std::vector<ImageTruth> truth;
  for (const Sample& s : samples) truth.push_back(truth_of(s));

  switch (task) {
    case EvalTask::Classify: {
      const PyramidSpec spec = PyramidSpec::two_level(class_count);
      std::vector<Vector> pooled;
      std::vector<BitVector> labels;
      for (std::size_t i = 0; i < samples.size(); ++i) {
        pooled.push_back(predictions[i].pooled);
        labels.push_back(encode_sample_labels(samples[i], spec).bits);
      }
      const ClassificationResult r = classification_map(pooled, labels, spec, options.ap_variant);
      report.add("cls_map_image", r.image_level);
      for (std::size_t t = 0; t < r.tiles.size(); ++t) {
        report.add("cls_map_tile" + std::to_string(t), r.tiles[t]);
      }
      report.add("cls_map_2x2", "mean", r.tile_mean);
      break;
    }
    case EvalTask::PointLoc: {
      std::vector<std::vector<PointPrediction>> points;
      for (const auto& p : predictions) points.push_back(p.points);
      const int tol = options.point_tolerance_px >= 0
                          ? options.point_tolerance_px
                          : (samples.empty() ? 0 : scaled_point_tolerance(samples.front().size()));
      report.add("pointloc_map", pointloc_map(points, truth, class_count, tol, options.ap_variant));
      break;
    }
    case EvalTask::CorLoc: {
      std::vector<std::vector<BoxPrediction>> boxes;
      for (const auto& p : predictions) boxes.push_back(p.boxes);
      const CorLocResult r =
          corloc(boxes, truth, class_count, options.iou_threshold, options.strict_iou);
      report.add("corloc", r.per_class);
      report.add("corloc", "pooled", r.pooled);
      break;
    }
  }
  return report;
}

std::string format_predictions(std::span<const ImagePredictions> predictions, EvalTask task) {
  std::string out;
  for (const ImagePredictions& p : predictions) {
    if (task == EvalTask::PointLoc) {
      for (const PointPrediction& q : p.points) {
        out += "image=" + p.image_id + " class=" + std::to_string(q.class_id) +
               " kind=point x=" + std::to_string(q.x) + " y=" + std::to_string(q.y) +
               " score=" + format_double(q.score) + "\n";
      }
    } else if (task == EvalTask::CorLoc) {
      for (const BoxPrediction& b : p.boxes) {
        out += "image=" + p.image_id + " class=" + std::to_string(b.class_id) +
               " kind=box x0=" + std::to_string(b.box.x_min) + " y0=" + std::to_string(b.box.y_min) +
               " x1=" + std::to_string(b.box.x_max) + " y1=" + std::to_string(b.box.y_max) +
               " score=" + format_double(b.score) + "\n";
      }
    }
  }
  return out;
}

std::vector<PredictionRecord> parse_predictions(std::istream& in) {
  std::vector<PredictionRecord> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "predictions line " + std::to_string(line_no) + ": ";
    std::map<std::string, std::string> fields;
    std::istringstream words(line);
    std::string word;
    while (words >> word) {
      const auto eq = word.find('=');
      if (eq == std::string::npos || eq == 0) throw std::runtime_error(where + "bad field '" + word + "'");
      fields[word.substr(0, eq)] = word.substr(eq + 1);
    }
    auto get = [&](const std::string& key) -> const std::string& {
      const auto it = fields.find(key);
      if (it == fields.end()) throw std::runtime_error(where + "missing " + key);
      return it->second;
    };
    auto get_int = [&](const std::string& key) {
      const std::string& text = get(key);
      try {
        return static_cast<int>(parse_integer(text, key));
      } catch (const std::runtime_error& e) {
        throw std::runtime_error(where + e.what());
      }
    };
    PredictionRecord r;
    r.image_id = get("image");
    r.class_id = get_int("class");
    double score = 0.0;
    const std::string& score_text = get("score");
    try {
      score = parse_double(score_text, "score");
    } catch (const std::runtime_error& e) {
      throw std::runtime_error(where + e.what());
    }
    const std::string& kind = get("kind");
    if (kind == "point") {
      r.point = {r.class_id, get_int("x"), get_int("y"), score};
    } else if (kind == "box") {
      r.is_box = true;
      r.box = {r.class_id, {get_int("x0"), get_int("y0"), get_int("x1"), get_int("y1")}, score};
    } else {
      throw std::runtime_error(where + "unknown kind '" + kind + "'");
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace wsod
