#include "wsod/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "wsod/hash.hpp"
#include "wsod/image_io.hpp"
#include "wsod/label_embedding.hpp"
#include "wsod/text_format.hpp"

namespace wsod {

namespace {

using nlohmann::json;

constexpr std::array<const char*, 6> kShapeNames{"disc", "square", "triangle",
                                                 "ring", "cross", "diamond"};
constexpr int kMaxClasses = static_cast<int>(kShapeNames.size());
// Base colour of each class; instances jitter around it. Saturated hues stay
// distinguishable from the gray background.
constexpr std::array<std::array<double, 3>, 6> kClassHue{{{0.90, 0.15, 0.15},
                                                          {0.15, 0.80, 0.20},
                                                          {0.15, 0.25, 0.95},
                                                          {0.95, 0.85, 0.10},
                                                          {0.85, 0.20, 0.85},
                                                          {0.10, 0.85, 0.90}}};
// Mass of subset sizes 1, 2, 3. With uniform pair weights and four classes
// this keeps class presence close to pairwise independent (PMI ~ 0).
constexpr std::array<double, 3> kSizeMass{0.45, 0.10, 0.45};
constexpr double kDuplicateProb = 0.25;

struct ShapeGeom {
  int kind;
  double cx, cy, r;
};

bool covers(const ShapeGeom& s, double px, double py) {
  const double dx = px - s.cx, dy = py - s.cy;
  switch (s.kind) {
    case 0:  // disc
      return dx * dx + dy * dy <= s.r * s.r;
    case 1:  // square
      return std::abs(dx) <= s.r && std::abs(dy) <= s.r;
    case 2:  // upward isosceles triangle
      return dy <= s.r && dy >= -s.r && std::abs(dx) <= (dy + s.r) / 2.0;
    case 3: {  // ring
      const double d2 = dx * dx + dy * dy;
      const double inner = 0.55 * s.r;
      return d2 <= s.r * s.r && d2 >= inner * inner;
    }
    case 4:  // cross
      return (std::abs(dx) <= s.r && std::abs(dy) <= s.r / 3.0) ||
             (std::abs(dy) <= s.r && std::abs(dx) <= s.r / 3.0);
    default:  // diamond
      return std::abs(dx) + std::abs(dy) <= s.r;
  }
}

struct Raster {
  Box box;
  std::vector<std::pair<int, int>> pixels;  // (x, y)
};

Raster rasterize(const ShapeGeom& s, ImageSize size) {
  Raster r;
  const int x0 = std::max(0, static_cast<int>(std::floor(s.cx - s.r - 1)));
  const int x1 = std::min(size.width, static_cast<int>(std::ceil(s.cx + s.r + 1)));
  const int y0 = std::max(0, static_cast<int>(std::floor(s.cy - s.r - 1)));
  const int y1 = std::min(size.height, static_cast<int>(std::ceil(s.cy + s.r + 1)));
  Box b{size.width, size.height, 0, 0};
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      if (!covers(s, x + 0.5, y + 0.5)) continue;
      r.pixels.emplace_back(x, y);
      b.x_min = std::min(b.x_min, x);
      b.y_min = std::min(b.y_min, y);
      b.x_max = std::max(b.x_max, x + 1);
      b.y_max = std::max(b.y_max, y + 1);
    }
  }
  r.box = b;
  return r;
}

// Centroid of the shape pixels, moved to the nearest shape pixel when the
// centroid itself is not covered (rings).
Point click_point(const Raster& r) {
  double sx = 0, sy = 0;
  for (auto [x, y] : r.pixels) {
    sx += x;
    sy += y;
  }
  const double n = static_cast<double>(r.pixels.size());
  const int cx = static_cast<int>(std::lround(sx / n));
  const int cy = static_cast<int>(std::lround(sy / n));
  Point best{r.pixels.front().first, r.pixels.front().second};
  long best_d = -1;
  for (auto [x, y] : r.pixels) {
    const long d = static_cast<long>(x - cx) * (x - cx) + static_cast<long>(y - cy) * (y - cy);
    if (best_d < 0 || d < best_d) {
      best_d = d;
      best = {x, y};
    }
  }
  return best;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

long line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<long>(std::count(text.begin(), text.begin() + static_cast<long>(offset), '\n'));
}

std::string row_string(const Matrix& m, Eigen::Index row) {
  std::string out;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    if (j) out += ',';
    out += format_double(m(row, j));
  }
  return out;
}

}  // namespace

std::set<int> Sample::classes() const {
  std::set<int> out;
  for (const Instance& inst : instances) out.insert(inst.class_id);
  return out;
}

std::vector<LabeledPoint> Sample::visible_points() const {
  std::vector<LabeledPoint> out;
  for (const Instance& inst : instances) {
    if (inst.point_visible) out.push_back({inst.class_id, inst.point.x, inst.point.y});
  }
  return out;
}

std::vector<Box> Sample::boxes_of(int class_id) const {
  std::vector<Box> out;
  for (const Instance& inst : instances) {
    if (inst.class_id == class_id) out.push_back(inst.box);
  }
  return out;
}

void Sample::validate(int class_count) const {
  if (image.rank() != 3 || image.dim(0) != 3) {
    throw std::runtime_error("sample " + id + ": image must be 3 x H x W");
  }
  const ImageSize sz = size();
  for (const Instance& inst : instances) {
    if (inst.class_id < 0 || inst.class_id >= class_count) {
      throw std::runtime_error("sample " + id + ": class " + std::to_string(inst.class_id) +
                               " out of range");
    }
    if (!inst.box.valid() || !inst.box.inside(sz)) {
      throw std::runtime_error("sample " + id + ": box outside image or empty");
    }
    if (inst.point_visible && !inst.box.contains(inst.point.x, inst.point.y)) {
      throw std::runtime_error("sample " + id + ": point (" + std::to_string(inst.point.x) + ", " +
                               std::to_string(inst.point.y) + ") not inside its box");
    }
  }
}

void DatasetConfig::validate() const {
  if (image_size.width < 16 || image_size.height < 16) {
    throw std::invalid_argument("dataset: image size must be at least 16x16");
  }
  if (class_count < 1 || class_count > kMaxClasses) {
    throw std::invalid_argument("dataset: class_count must be in [1, " +
                                std::to_string(kMaxClasses) + "]");
  }
  if (train_images < 0 || eval_images < 0) throw std::invalid_argument("dataset: negative count");
  if (max_objects < 1 || max_objects > 3) {
    throw std::invalid_argument("dataset: max_objects must be in [1, 3]");
  }
  if (!(min_size_frac > 0 && min_size_frac <= max_size_frac && max_size_frac < 0.9)) {
    throw std::invalid_argument("dataset: bad size range");
  }
  if (!(max_overlap_iou >= 0 && max_overlap_iou <= 1)) {
    throw std::invalid_argument("dataset: max_overlap_iou must be in [0, 1]");
  }
  if (!(noise_sigma >= 0)) throw std::invalid_argument("dataset: noise_sigma must be >= 0");
  if (cooccurrence_bias.rows() != class_count || cooccurrence_bias.cols() != class_count) {
    throw std::invalid_argument("dataset: cooccurrence_bias must be class_count x class_count");
  }
  if ((cooccurrence_bias.array() < 0).any()) {
    throw std::invalid_argument("dataset: cooccurrence_bias must be non-negative");
  }
}

Matrix bias_matrix(BiasPreset preset, int class_count) {
  Matrix m = Matrix::Ones(class_count, class_count);
  if (preset == BiasPreset::Correlated) {
    // Classes pair up as (0,1), (2,3), ...: partners are strongly preferred.
    for (int i = 0; i < class_count; ++i)
      for (int j = 0; j < class_count; ++j)
        if (i != j) m(i, j) = (i / 2 == j / 2) ? 6.0 : 0.3;
  }
  return m;
}

std::string class_name(int class_id) {
  if (class_id >= 0 && class_id < kMaxClasses) return kShapeNames[static_cast<std::size_t>(class_id)];
  return "class" + std::to_string(class_id);
}

SubsetDistribution subset_distribution(const DatasetConfig& config) {
  config.validate();
  const int c = config.class_count;
  const int kmax = std::min(config.max_objects, c);
  std::vector<double> size_count(static_cast<std::size_t>(kmax) + 1, 0.0);
  SubsetDistribution d;
  for (unsigned mask = 1; mask < (1u << c); ++mask) {
    std::vector<int> s;
    for (int k = 0; k < c; ++k)
      if (mask & (1u << k)) s.push_back(k);
    if (static_cast<int>(s.size()) > kmax) continue;
    d.subsets.push_back(s);
    size_count[s.size()] += 1.0;
  }
  double total = 0.0;
  for (const auto& s : d.subsets) {
    double w = kSizeMass[s.size() - 1] / size_count[s.size()];
    for (std::size_t a = 0; a < s.size(); ++a)
      for (std::size_t b = a + 1; b < s.size(); ++b) w *= config.cooccurrence_bias(s[a], s[b]);
    d.probabilities.push_back(w);
    total += w;
  }
  if (!(total > 0)) throw std::invalid_argument("dataset: cooccurrence_bias excludes every subset");
  for (double& p : d.probabilities) p /= total;
  return d;
}

std::vector<Sample> generate_split(const DatasetConfig& config, const std::string& split) {
  config.validate();
  int count;
  std::uint32_t tag;
  if (split == "train") {
    count = config.train_images;
    tag = 1;
  } else if (split == "eval") {
    count = config.eval_images;
    tag = 2;
  } else {
    throw std::invalid_argument("dataset: unknown split '" + split + "'");
  }

  std::seed_seq seq{static_cast<std::uint32_t>(config.seed),
                    static_cast<std::uint32_t>(config.seed >> 32), tag};
  std::mt19937_64 rng(seq);
  const SubsetDistribution subsets = subset_distribution(config);
  std::discrete_distribution<std::size_t> pick_subset(subsets.probabilities.begin(),
                                                      subsets.probabilities.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);

  const ImageSize sz = config.image_size;
  const double side = std::min(sz.width, sz.height);
  const auto h = static_cast<std::size_t>(sz.height), w = static_cast<std::size_t>(sz.width);

  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int index = 0; index < count; ++index) {
    std::vector<int> classes = subsets.subsets[pick_subset(rng)];
    if (static_cast<int>(classes.size()) < config.max_objects && unit(rng) < kDuplicateProb) {
      classes.push_back(classes[static_cast<std::size_t>(unit(rng) * classes.size()) % classes.size()]);
    }

    std::vector<ShapeGeom> shapes;
    std::vector<Raster> rasters;
    for (bool placed = false; !placed;) {
      shapes.clear();
      rasters.clear();
      placed = true;
      for (int cls : classes) {
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
          const double size =
              side * (config.min_size_frac + (config.max_size_frac - config.min_size_frac) * unit(rng));
          const double r = size / 2.0;
          ShapeGeom g{cls, r + 1 + unit(rng) * (sz.width - 2 * r - 2),
                      r + 1 + unit(rng) * (sz.height - 2 * r - 2), r};
          Raster ras = rasterize(g, sz);
          if (ras.pixels.empty()) continue;
          ok = std::all_of(rasters.begin(), rasters.end(), [&](const Raster& other) {
            return iou(other.box, ras.box) <= config.max_overlap_iou;
          });
          if (ok) {
            shapes.push_back(g);
            rasters.push_back(std::move(ras));
          }
        }
        if (!ok) {
          placed = false;
          break;
        }
      }
    }

    Sample s;
    char id[16];
    std::snprintf(id, sizeof(id), "%06d", index);
    s.id = id;
    s.image = Tensor({3, h, w});
    const double background = 0.35 + 0.3 * unit(rng);
    s.image.fill(background);
    for (std::size_t i = 0; i < shapes.size(); ++i) {
      std::array<double, 3> color = kClassHue[static_cast<std::size_t>(shapes[i].kind)];
      for (double& c : color) c = std::clamp(c + 0.2 * (unit(rng) - 0.5), 0.0, 1.0);
      for (auto [x, y] : rasters[i].pixels)
        for (std::size_t c = 0; c < 3; ++c) s.image.at(c, y, x) = color[c];
      s.instances.push_back({shapes[i].kind, rasters[i].box, click_point(rasters[i]), true});
    }
    for (double& v : s.image.values()) {
      v = to_byte(v + config.noise_sigma * noise(rng)) / 255.0;
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_split(const std::filesystem::path& split_dir, const std::vector<Sample>& samples,
                 int class_count) {
  std::filesystem::create_directories(split_dir / "images");
  json doc;
  doc["version"] = 1;
  doc["class_count"] = class_count;
  json names = json::array();
  for (int k = 0; k < class_count; ++k) names.push_back(class_name(k));
  doc["class_names"] = names;
  ImageSize sz = samples.empty() ? ImageSize{0, 0} : samples.front().size();
  doc["image_size"] = {sz.width, sz.height};
  json images = json::array();
  for (const Sample& s : samples) {
    const std::string file = "images/" + s.id + ".ppm";
    write_ppm(split_dir / file, s.image);
    json entry;
    entry["id"] = s.id;
    entry["file"] = file;
    entry["classes"] = s.classes();
    json points = json::array(), boxes = json::array();
    for (const Instance& inst : s.instances) {
      points.push_back({inst.class_id, inst.point.x, inst.point.y});
      boxes.push_back({inst.class_id, inst.box.x_min, inst.box.y_min, inst.box.x_max, inst.box.y_max});
    }
    entry["points"] = points;
    entry["boxes"] = boxes;
    images.push_back(entry);
  }
  doc["images"] = images;
  std::ofstream out(split_dir / "annotations.json", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (split_dir / "annotations.json").string());
  out << doc.dump(1) << '\n';
  if (!out) throw std::runtime_error("write failed: " + (split_dir / "annotations.json").string());
}

std::uint64_t split_content_hash(const std::filesystem::path& split_dir) {
  const std::string annotations = read_file(split_dir / "annotations.json");
  std::uint64_t h = fnv1a(annotations);
  const json doc = json::parse(annotations);
  for (const json& entry : doc.at("images")) {
    const std::string bytes = read_file(split_dir / entry.at("file").get<std::string>());
    h = fnv1a(h, bytes);
  }
  return h;
}

DatasetManifest generate_dataset(const DatasetConfig& config, const std::filesystem::path& root,
                                 const std::string& config_echo) {
  config.validate();
  std::filesystem::create_directories(root);
  const auto train = generate_split(config, "train");
  const auto eval = generate_split(config, "eval");
  write_split(root / "train", train, config.class_count);
  write_split(root / "eval", eval, config.class_count);

  const std::uint64_t train_hash = split_content_hash(root / "train");
  const std::uint64_t eval_hash = split_content_hash(root / "eval");
  const std::string both = hex64(train_hash) + hex64(eval_hash);

  DatasetManifest m;
  m.content_hash = fnv1a(both);

  std::ostringstream t;
  t << "wsod-dataset v1\n";
  t << "seed=" << config.seed << '\n';
  t << "image_size=" << config.image_size.width << 'x' << config.image_size.height << '\n';
  t << "class_count=" << config.class_count << '\n';
  t << "class_names=";
  for (int k = 0; k < config.class_count; ++k) t << (k ? "," : "") << class_name(k);
  t << '\n';
  t << "train_images=" << config.train_images << '\n';
  t << "eval_images=" << config.eval_images << '\n';
  t << "max_objects=" << config.max_objects << '\n';
  t << "size_frac=" << format_double(config.min_size_frac) << ','
    << format_double(config.max_size_frac) << '\n';
  t << "max_overlap_iou=" << format_double(config.max_overlap_iou) << '\n';
  t << "noise_sigma=" << format_double(config.noise_sigma) << '\n';
  for (Eigen::Index i = 0; i < config.cooccurrence_bias.rows(); ++i) {
    t << "bias_row_" << i << '=' << row_string(config.cooccurrence_bias, i) << '\n';
  }
  if (!config_echo.empty()) t << "config=" << config_echo << '\n';
  if (!train.empty()) {
    std::vector<BitVector> labels;
    for (const Sample& s : train) labels.push_back(encode_image_labels(s.classes(), PyramidSpec::image_level(config.class_count)).bits);
    const Matrix ppmi = compute_ppmi(compute_pmi(count_cooccurrences(labels)));
    for (Eigen::Index i = 0; i < ppmi.rows(); ++i) {
      t << "train_ppmi_row_" << i << '=' << row_string(ppmi, i) << '\n';
    }
  }
  t << "train_hash=" << hex64(train_hash) << '\n';
  t << "eval_hash=" << hex64(eval_hash) << '\n';
  t << "content_hash=" << hex64(m.content_hash) << '\n';
  m.text = t.str();

  std::ofstream out(root / "manifest.txt", std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + (root / "manifest.txt").string());
  out << m.text;
  if (!out) throw std::runtime_error("write failed: " + (root / "manifest.txt").string());
  return m;
}

int dataset_class_count(const std::filesystem::path& split_dir) {
  const auto path = split_dir / "annotations.json";
  try {
    return json::parse(read_file(path)).at("class_count").get<int>();
  } catch (const json::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

std::vector<Sample> load_dataset(const std::filesystem::path& split_dir) {
  const auto path = split_dir / "annotations.json";
  const std::string text = read_file(path);
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(path.string() + " line " + std::to_string(line_of_offset(text, e.byte)) +
                             ": " + e.what());
  }

  std::vector<Sample> samples;
  std::string current_id;
  auto fail = [&](const std::string& message) -> std::runtime_error {
    long line = 0;
    if (!current_id.empty()) {
      const auto pos = text.find("\"" + current_id + "\"");
      if (pos != std::string::npos) line = line_of_offset(text, pos);
    }
    return std::runtime_error(path.string() + (line ? " line " + std::to_string(line) : "") +
                              (current_id.empty() ? "" : " (image " + current_id + ")") + ": " +
                              message);
  };

  try {
    if (doc.at("version").get<int>() != 1) throw fail("unsupported version");
    const int class_count = doc.at("class_count").get<int>();
    const auto size = doc.at("image_size").get<std::vector<int>>();
    if (size.size() != 2) throw fail("image_size must be [width, height]");
    for (const json& entry : doc.at("images")) {
      current_id = entry.at("id").get<std::string>();
      Sample s;
      s.id = current_id;
      s.image = read_ppm(split_dir / entry.at("file").get<std::string>());
      if (s.size() != ImageSize{size[0], size[1]}) throw fail("image dimensions differ from image_size");
      const auto points = entry.at("points").get<std::vector<std::vector<int>>>();
      const auto boxes = entry.at("boxes").get<std::vector<std::vector<int>>>();
      if (points.size() != boxes.size()) throw fail("points and boxes differ in length");
      for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].size() != 3 || boxes[i].size() != 5) throw fail("malformed point or box");
        if (points[i][0] != boxes[i][0]) throw fail("point and box classes differ");
        s.instances.push_back({points[i][0],
                               Box{boxes[i][1], boxes[i][2], boxes[i][3], boxes[i][4]},
                               Point{points[i][1], points[i][2]}, true});
      }
      const auto classes = entry.at("classes").get<std::set<int>>();
      if (classes != s.classes()) throw fail("classes list does not match instances");
      try {
        s.validate(class_count);
      } catch (const std::exception& e) {
        throw fail(e.what());
      }
      samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw fail(e.what());
  }
  return samples;
}

}  // namespace wsod
