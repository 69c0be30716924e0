#include "wsod/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "CLI11.hpp"
#include "wsod/checkpoint.hpp"
#include "wsod/dataset.hpp"
#include "wsod/evaluation.hpp"
#include "wsod/hash.hpp"
#include "wsod/image_io.hpp"
#include "wsod/label_embedding.hpp"
#include "wsod/text_format.hpp"
#include "wsod/trainer.hpp"

namespace wsod::cli {

namespace fs = std::filesystem;

namespace {

/// Bad flags, missing inputs, unusable paths: exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class LogLevel { Quiet, Info, Debug };

/// WSOD_LOG_LEVEL = quiet | info | debug (default info).
LogLevel log_level() {
  const char* v = std::getenv("WSOD_LOG_LEVEL");
  if (v == nullptr) return LogLevel::Info;
  const std::string s(v);
  if (s == "quiet") return LogLevel::Quiet;
  if (s == "debug") return LogLevel::Debug;
  return LogLevel::Info;
}

constexpr int kDefaultIterations = 3000;
constexpr int kDefaultBatch = 32;

fs::path split_dir(const fs::path& data, const std::string& split) {
  if (fs::exists(data / split / "annotations.json")) return data / split;
  if (fs::exists(data / "annotations.json")) return data;
  throw UsageError("no '" + split + "' split under " + data.string());
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UsageError("cannot read " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UsageError("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void ensure_parent(const fs::path& file) {
  const fs::path parent = file.parent_path();
  if (parent.empty()) return;
  std::error_code ec;
  fs::create_directories(parent, ec);
  if (ec) throw UsageError("cannot create " + parent.string() + ": " + ec.message());
}

Network load_network(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw UsageError("checkpoint not found: " + path.string());
  return load_checkpoint(path);
}

void check_compatible(const Network& net, const std::vector<Sample>& samples, int class_count) {
  if (net.config().class_count != class_count) {
    throw UsageError("checkpoint has " + std::to_string(net.config().class_count) +
                     " classes, dataset has " + std::to_string(class_count));
  }
  if (!samples.empty()) {
    const ImageSize sz = samples.front().size();
    if (sz.width != net.config().input_width || sz.height != net.config().input_height) {
      throw UsageError("checkpoint input size does not match the dataset images");
    }
  }
}

std::vector<int> levels_of(const std::string& labels) {
  return labels == "pyramid2" ? std::vector<int>{1, 2} : std::vector<int>{1};
}

BoxOptions box_options(const std::string& domain, double frac) {
  BoxOptions o;
  o.threshold_frac = frac;
  o.domain = domain == "activation" ? ThresholdDomain::Activation : ThresholdDomain::Probability;
  if (!(frac > 0 && frac < 1)) throw UsageError("--threshold must be in (0, 1)");
  return o;
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::string out;
  std::uint64_t seed = 1;
  int images = 800;
  int classes = 4;
  std::string bias_preset = "uniform";
};

int gen_data(const GenDataArgs& a, std::ostream& out) {
  if (a.images < 2) throw UsageError("--images must be at least 2");
  DatasetConfig config;
  config.seed = a.seed;
  config.class_count = a.classes;
  config.train_images = a.images * 3 / 4;
  config.eval_images = a.images - config.train_images;
  config.cooccurrence_bias = bias_matrix(
      a.bias_preset == "correlated" ? BiasPreset::Correlated : BiasPreset::Uniform, a.classes);
  config.validate();

  std::error_code ec;
  fs::create_directories(a.out, ec);
  if (ec || !fs::is_directory(a.out)) {
    throw UsageError("cannot create output directory " + a.out +
                     (ec ? ": " + ec.message() : std::string()));
  }
  const std::string echo = "images=" + std::to_string(a.images) +
                           " classes=" + std::to_string(a.classes) + " bias_preset=" + a.bias_preset;
  const DatasetManifest m = generate_dataset(config, a.out, echo);
  out << m.text;
  return kExitOk;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string loss = "cosine-ppmi";
  std::string labels = "image";
  int iters = kDefaultIterations;
  int batch = kDefaultBatch;
  std::uint64_t seed = 1;
  std::string checkpoint_out;
  std::string warm_start;
  bool paper_schedule = false;
  bool no_augment = false;
  double warmup_lr = 1e-4;
  int warmup_iters = 600;
  double base_lr = 1e-3;
  double momentum = 0.9;
};

int train_cmd(TrainArgs a, const CLI::App& sub, std::ostream& out) {
  if (a.paper_schedule) {
    const TrainingConfig paper = TrainingConfig::paper_schedule();
    if (sub.count("--iters") == 0) a.iters = paper.iterations;
    if (sub.count("--batch") == 0) a.batch = paper.batch_size;
  }
  // Short runs keep the whole budget at the warm-up rate unless told otherwise.
  if (sub.count("--warmup-iters") == 0) a.warmup_iters = std::min(a.warmup_iters, a.iters);
  const fs::path train_dir = split_dir(a.data, "train");
  const std::vector<Sample> samples = load_dataset(train_dir);
  const int class_count = dataset_class_count(train_dir);
  if (samples.empty()) throw UsageError("training split is empty");

  TrainingConfig config;
  config.batch_size = a.batch;
  config.iterations = a.iters;
  config.warmup_lr = a.warmup_lr;
  config.warmup_iters = a.warmup_iters;
  config.base_lr = a.base_lr;
  config.momentum = a.momentum;
  config.seed = a.seed;
  config.loss_mode = a.loss == "logistic" ? LossMode::BinaryLogistic : LossMode::CosinePpmi;
  config.pyramid_levels = levels_of(a.labels);
  config.validate();
  const AugmentationConfig augmentation =
      a.no_augment ? AugmentationConfig::disabled() : AugmentationConfig{};

  std::string warm_hash = "none";
  std::optional<Network> net;
  if (!a.warm_start.empty()) {
    net = load_network(a.warm_start);
    check_compatible(*net, samples, class_count);
    warm_hash = hex64(fnv1a(read_bytes(a.warm_start)));
  } else {
    NetworkConfig nc;
    nc.input_width = samples.front().size().width;
    nc.input_height = samples.front().size().height;
    nc.class_count = class_count;
    net = build_network(nc, a.seed);
  }

  const fs::path ckpt = a.checkpoint_out;
  ensure_parent(ckpt);
  const PyramidSpec spec(config.pyramid_levels, class_count);
  std::optional<EmbeddingModel> embedding;
  if (config.loss_mode == LossMode::CosinePpmi) {
    embedding = fit_training_embedding(samples, spec);
    save_embedding(fs::path(ckpt.string() + ".embed"), *embedding);
  }

  std::ostringstream echo;
  echo << "loss=" << a.loss << " labels=" << a.labels << " iters=" << a.iters
       << " batch=" << a.batch << " seed=" << a.seed << " warmup_lr=" << format_double(a.warmup_lr)
       << " warmup_iters=" << a.warmup_iters << " base_lr=" << format_double(a.base_lr)
       << " momentum=" << format_double(a.momentum) << " augment=" << (a.no_augment ? 0 : 1)
       << " warm_start=" << warm_hash;
  const std::string data_hash = hex64(split_content_hash(train_dir));

  const fs::path log_path = ckpt.string() + ".log";
  std::ofstream log(log_path, std::ios::binary);
  if (!log) throw UsageError("cannot write " + log_path.string());
  log << "# pmi-wsod train\n# seed=" << a.seed << "\n# config=" << echo.str()
      << "\n# config_hash=" << hex64(fnv1a(echo.str())) << "\n# data_hash=" << data_hash
      << "\n# embedding_dim=" << (embedding ? embedding->class_dim() : 0) << '\n';

  const LogLevel level = log_level();
  const int every = std::max(1, a.iters / 20);
  if (level != LogLevel::Quiet) {
    out << "training " << a.loss << " labels=" << a.labels << " on " << samples.size()
        << " images, " << a.iters << " iterations of batch " << a.batch << '\n';
  }
  Trainer trainer(*net, config, augmentation, embedding);
  double window = 0.0;
  int window_n = 0;
  trainer.run(samples, [&](const IterationRecord& r) {
    log << format_iteration(r) << '\n';
    window += r.loss;
    ++window_n;
    const bool report = level == LogLevel::Debug || (r.iteration + 1) % every == 0 ||
                        r.iteration + 1 == a.iters;
    if (report && level != LogLevel::Quiet) {
      out << "iter " << r.iteration + 1 << "/" << a.iters << " lr=" << format_double(r.learning_rate)
          << " loss=" << format_fixed(window / window_n, 6) << std::endl;
      window = 0.0;
      window_n = 0;
    }
  });
  save_checkpoint(ckpt, *net);
  log << "# checkpoint_hash=" << hex64(fnv1a(read_bytes(ckpt))) << '\n';
  if (!log) throw std::runtime_error("write failed: " + log_path.string());
  if (level != LogLevel::Quiet) out << "wrote " << ckpt.string() << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::string data;
  std::string checkpoint;
  std::string task = "classify";
  std::string report_out;
  std::string predictions_out;
  std::string split = "eval";
  std::string threshold_domain = "probability";
  double threshold = 0.10;
  double iou_threshold = 0.5;
  bool iou_inclusive = false;
  int tolerance = -1;
  std::string ap = "all-point";
};

int eval_cmd(const EvalArgs& a, std::ostream& out) {
  const Network net = load_network(a.checkpoint);
  const fs::path dir = split_dir(a.data, a.split);
  const std::vector<Sample> samples = load_dataset(dir);
  const int class_count = dataset_class_count(dir);
  check_compatible(net, samples, class_count);

  const EvalTask task = a.task == "pointloc"  ? EvalTask::PointLoc
                        : a.task == "corloc" ? EvalTask::CorLoc
                                             : EvalTask::Classify;
  EvaluationOptions options;
  options.box = box_options(a.threshold_domain, a.threshold);
  options.iou_threshold = a.iou_threshold;
  options.strict_iou = !a.iou_inclusive;
  options.point_tolerance_px = a.tolerance;
  options.ap_variant = a.ap == "11-point" ? ApVariant::ElevenPoint : ApVariant::AllPoint;

  const std::vector<ImagePredictions> predictions = predict_images(net, samples, options.box);
  const MetricReport report = evaluate(task, predictions, samples, class_count, options);

  std::ostringstream header;
  header << "# pmi-wsod eval task=" << a.task << " split=" << a.split
         << " checkpoint_hash=" << hex64(fnv1a(read_bytes(a.checkpoint)))
         << " data_hash=" << hex64(split_content_hash(dir)) << " images=" << samples.size()
         << " threshold_domain=" << a.threshold_domain << " threshold=" << format_double(a.threshold)
         << " iou=" << format_double(a.iou_threshold) << (a.iou_inclusive ? " inclusive" : " strict")
         << " tolerance=" << a.tolerance << " ap=" << a.ap << '\n';

  out << report.table() << report.records();
  if (!a.report_out.empty()) {
    ensure_parent(a.report_out);
    write_text(a.report_out, header.str() + report.records() + "\n" + report.table());
  }
  if (!a.predictions_out.empty()) {
    ensure_parent(a.predictions_out);
    write_text(a.predictions_out, format_predictions(predictions, task));
  }
  return kExitOk;
}

// ---------------------------------------------------------------- export-cam

struct ExportArgs {
  std::string data;
  std::string checkpoint;
  std::string image_id;
  std::string out_dir;
  std::string split = "eval";
  std::string threshold_domain = "probability";
  double threshold = 0.10;
};

/// Map cell covering each image pixel along one axis, using the same cell
/// spans as box extraction.
std::vector<int> cell_lookup(int map_extent, int image_extent) {
  std::vector<int> cell(static_cast<std::size_t>(image_extent), 0);
  for (int c = 0; c < map_extent; ++c) {
    const int begin = map_to_image_edge(c, map_extent, image_extent);
    const int end = map_to_image_edge(c + 1, map_extent, image_extent);
    for (int x = begin; x < end; ++x) cell[static_cast<std::size_t>(x)] = c;
  }
  return cell;
}

int export_cam(const ExportArgs& a, std::ostream& out) {
  const Network net = load_network(a.checkpoint);
  const fs::path dir = split_dir(a.data, a.split);
  const std::vector<Sample> samples = load_dataset(dir);
  check_compatible(net, samples, dataset_class_count(dir));
  const auto it = std::find_if(samples.begin(), samples.end(),
                               [&](const Sample& s) { return s.id == a.image_id; });
  if (it == samples.end()) throw UsageError("no image '" + a.image_id + "' in " + dir.string());

  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec) throw UsageError("cannot create " + a.out_dir + ": " + ec.message());

  const BoxOptions options = box_options(a.threshold_domain, a.threshold);
  const ClassActivationMap cam = forward_cam(net, it->image);
  const Tensor prob = cam_probabilities(cam);
  const Tensor& box_map = options.domain == ThresholdDomain::Probability ? prob : cam;
  const ImageSize sz = it->size();
  const int h = static_cast<int>(cam.dim(1)), w = static_cast<int>(cam.dim(2));
  const std::vector<int> row_of = cell_lookup(h, sz.height);
  const std::vector<int> col_of = cell_lookup(w, sz.width);

  std::ostringstream sidecar;
  sidecar << "image=" << a.image_id << " width=" << sz.width << " height=" << sz.height
          << " map_width=" << w << " map_height=" << h << " threshold_domain=" << a.threshold_domain
          << " threshold=" << format_double(a.threshold) << '\n';
  for (int k = 0; k < net.config().class_count; ++k) {
    const std::vector<std::uint8_t> mask = foreground_mask(box_map, k, options);
    GrayImage prob_img{sz.width, sz.height, {}};
    GrayImage mask_img{sz.width, sz.height, {}};
    for (int y = 0; y < sz.height; ++y) {
      for (int x = 0; x < sz.width; ++x) {
        const int i = row_of[static_cast<std::size_t>(y)], j = col_of[static_cast<std::size_t>(x)];
        prob_img.pixels.push_back(to_byte(prob.at(static_cast<std::size_t>(k), i, j)));
        mask_img.pixels.push_back(mask[static_cast<std::size_t>(i * w + j)] ? 255 : 0);
      }
    }
    const std::string stem = a.image_id + "_class" + std::to_string(k);
    write_pgm(fs::path(a.out_dir) / (stem + "_prob.pgm"), prob_img);
    write_pgm(fs::path(a.out_dir) / (stem + "_mask.pgm"), mask_img);

    const PointPrediction p = predict_point(prob, k, sz);
    sidecar << "class=" << k << " name=" << class_name(k) << " max_prob=" << format_double(p.score)
            << " point=" << p.x << ',' << p.y;
    if (const auto b = predict_box(box_map, k, sz, options)) {
      sidecar << " box=" << b->box.x_min << ',' << b->box.y_min << ',' << b->box.x_max << ','
              << b->box.y_max;
    } else {
      sidecar << " box=none";
    }
    sidecar << " files=" << stem << "_prob.pgm," << stem << "_mask.pgm\n";
  }
  write_text(fs::path(a.out_dir) / (a.image_id + "_cam.txt"), sidecar.str());
  if (log_level() != LogLevel::Quiet) out << sidecar.str();
  return kExitOk;
}

// ---------------------------------------------------------------- inspect-embedding

struct InspectArgs {
  std::string data;
  std::string labels = "image";
  std::string split = "train";
};

int inspect_embedding(const InspectArgs& a, std::ostream& out) {
  const fs::path dir = split_dir(a.data, a.split);
  const std::vector<Sample> samples = load_dataset(dir);
  const PyramidSpec spec(levels_of(a.labels), dataset_class_count(dir));
  std::vector<BitVector> vectors;
  for (const Sample& s : samples) vectors.push_back(encode_sample_labels(s, spec).bits);
  const CooccurrenceTable table = count_cooccurrences(vectors);
  const PmiMatrix pmi = compute_pmi(table);
  const EmbeddingModel model = fit_embedding(compute_ppmi(pmi));
  const std::size_t n = table.class_dim();

  out << "dim=" << n << " labels=" << a.labels << " split=" << a.split
      << " units=" << table.unit_count() << '\n';
  out << "counts\n";
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) out << (j ? " " : "") << table.joint(i, j);
    out << '\n';
  }
  auto print_matrix = [&](const char* name, const Matrix& m, const auto& defined) {
    out << name << '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        out << (j ? " " : "") << (defined(i, j) ? format_fixed(m(i, j), 6) : std::string("undef"));
      }
      out << '\n';
    }
  };
  print_matrix("pmi", pmi.values, [&](Eigen::Index i, Eigen::Index j) { return pmi.defined(i, j); });
  print_matrix("ppmi", model.ppmi, [](Eigen::Index, Eigen::Index) { return true; });
  out << "eigenvalues";
  for (Eigen::Index i = 0; i < model.eigenvalues.size(); ++i) {
    out << ' ' << format_fixed(model.eigenvalues(i), 6);
  }
  out << "\nclamped_mass=" << format_fixed(model.clamped_mass, 6) << '\n';
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Weakly supervised localization with PMI-embedded labels"};
  app.name("pmi-wsod");
  app.require_subcommand(1);
  app.set_config("--config", "", "INI/TOML file with flag values (flags take precedence)");

  std::function<int()> action;

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic shapes dataset");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "Random seed");
  gen_cmd->add_option("--images", gen.images, "Total images, split 3:1 into train and eval");
  gen_cmd->add_option("--classes", gen.classes, "Number of shape classes (1-6)");
  gen_cmd->add_option("--bias-preset", gen.bias_preset, "Class co-occurrence preset")
      ->check(CLI::IsMember({"uniform", "correlated"}));
  gen_cmd->callback([&] { action = [&] { return gen_data(gen, out); }; });

  TrainArgs tr;
  auto* train_sub = app.add_subcommand("train", "Train the CAM network");
  train_sub->add_option("--data", tr.data, "Dataset root")->required();
  train_sub->add_option("--loss", tr.loss, "Loss")->check(CLI::IsMember({"cosine-ppmi", "logistic"}));
  train_sub->add_option("--labels", tr.labels, "Label granularity")
      ->check(CLI::IsMember({"image", "pyramid2"}));
  train_sub->add_option("--iters", tr.iters, "Iterations")->check(CLI::NonNegativeNumber);
  train_sub->add_option("--batch", tr.batch, "Batch size")->check(CLI::PositiveNumber);
  train_sub->add_option("--seed", tr.seed, "Seed for init, batch order and augmentation");
  train_sub->add_option("--checkpoint-out", tr.checkpoint_out, "Checkpoint path")->required();
  train_sub->add_option("--warm-start", tr.warm_start, "Initialize from this checkpoint");
  train_sub->add_flag("--paper-schedule", tr.paper_schedule, "Batch 256, 2000 iterations");
  train_sub->add_flag("--no-augment", tr.no_augment, "Disable data augmentation");
  train_sub->add_option("--warmup-lr", tr.warmup_lr, "Learning rate before --warmup-iters");
  train_sub->add_option("--warmup-iters", tr.warmup_iters, "Iterations at the warm-up rate");
  train_sub->add_option("--base-lr", tr.base_lr, "Learning rate after warm-up");
  train_sub->add_option("--momentum", tr.momentum, "SGD momentum");
  train_sub->callback([&] { action = [&] { return train_cmd(tr, *train_sub, out); }; });

  EvalArgs ev;
  auto* eval_sub = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval_sub->add_option("--data", ev.data, "Dataset root")->required();
  eval_sub->add_option("--checkpoint", ev.checkpoint, "Checkpoint path")->required();
  eval_sub->add_option("--task", ev.task, "Protocol")
      ->check(CLI::IsMember({"classify", "pointloc", "corloc"}));
  eval_sub->add_option("--report-out", ev.report_out, "Write the report here");
  eval_sub->add_option("--predictions-out", ev.predictions_out, "Write the prediction dump here");
  eval_sub->add_option("--split", ev.split, "Split to evaluate")->check(CLI::IsMember({"train", "eval"}));
  eval_sub->add_option("--threshold-domain", ev.threshold_domain, "Box threshold domain")
      ->check(CLI::IsMember({"probability", "activation"}));
  eval_sub->add_option("--threshold", ev.threshold, "Box threshold as a fraction of the maximum");
  eval_sub->add_option("--iou", ev.iou_threshold, "CorLoc IoU threshold");
  eval_sub->add_flag("--iou-inclusive", ev.iou_inclusive, "Count IoU equal to the threshold as correct");
  eval_sub->add_option("--tolerance", ev.tolerance, "Point tolerance in pixels (default: scaled 18 px)");
  eval_sub->add_option("--ap", ev.ap, "AP variant")->check(CLI::IsMember({"all-point", "11-point"}));
  eval_sub->callback([&] { action = [&] { return eval_cmd(ev, out); }; });

  ExportArgs ex;
  auto* export_sub = app.add_subcommand("export-cam", "Write class activation maps as PGM images");
  export_sub->add_option("--data", ex.data, "Dataset root")->required();
  export_sub->add_option("--checkpoint", ex.checkpoint, "Checkpoint path")->required();
  export_sub->add_option("--image-id", ex.image_id, "Image id")->required();
  export_sub->add_option("--out-dir", ex.out_dir, "Output directory")->required();
  export_sub->add_option("--split", ex.split, "Split holding the image")
      ->check(CLI::IsMember({"train", "eval"}));
  export_sub->add_option("--threshold-domain", ex.threshold_domain, "Mask threshold domain")
      ->check(CLI::IsMember({"probability", "activation"}));
  export_sub->add_option("--threshold", ex.threshold, "Mask threshold as a fraction of the maximum");
  export_sub->callback([&] { action = [&] { return export_cam(ex, out); }; });

  InspectArgs in;
  auto* inspect_sub =
      app.add_subcommand("inspect-embedding", "Print label co-occurrence statistics");
  inspect_sub->add_option("--data", in.data, "Dataset root")->required();
  inspect_sub->add_option("--labels", in.labels, "Label granularity")
      ->check(CLI::IsMember({"image", "pyramid2"}));
  inspect_sub->add_option("--split", in.split, "Split")->check(CLI::IsMember({"train", "eval"}));
  inspect_sub->callback([&] { action = [&] { return inspect_embedding(in, out); }; });

  std::vector<const char*> argv{"pmi-wsod"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    return action ? action() : kExitUsage;
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
}

}  // namespace wsod::cli
