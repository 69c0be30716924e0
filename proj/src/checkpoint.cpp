#include "wsod/checkpoint.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

#include "wsod/text_format.hpp"

namespace wsod {

namespace {

constexpr const char* kMagic = "wsod-checkpoint";
constexpr const char* kVersion = "v1";

void write_values(std::ostream& out, std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    out << format_double(values[i]) << ((i + 1) % 8 == 0 || i + 1 == values.size() ? '\n' : ' ');
  }
}

}  // namespace

void write_checkpoint(std::ostream& out, const Network& net) {
  const NetworkConfig& c = net.config();
  out << kMagic << ' ' << kVersion << '\n';
  out << "input " << c.input_width << ' ' << c.input_height << ' ' << c.input_channels << '\n';
  out << "classes " << c.class_count << '\n';
  out << "blocks " << c.block_widths.size();
  for (int w : c.block_widths) out << ' ' << w;
  out << '\n';
  out << "head " << c.head_width << '\n';
  const auto layers = net.layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Shape& s = layers[i].kernel.shape();
    out << "layer " << i << " kernel " << s[0] << ' ' << s[1] << ' ' << s[2] << ' ' << s[3] << '\n';
    write_values(out, layers[i].kernel.values());
    out << "bias " << layers[i].bias.size() << '\n';
    write_values(out, layers[i].bias);
  }
  out << "end\n";
}

Network read_checkpoint(std::istream& in, const std::string& source) {
  TokenReader r(in, source);
  r.expect(kMagic);
  r.expect(kVersion);
  NetworkConfig c;
  r.expect("input");
  c.input_width = static_cast<int>(r.next_integer());
  c.input_height = static_cast<int>(r.next_integer());
  c.input_channels = static_cast<int>(r.next_integer());
  r.expect("classes");
  c.class_count = static_cast<int>(r.next_integer());
  r.expect("blocks");
  const long blocks = r.next_integer();
  if (blocks < 0 || blocks > 16) r.fail("implausible block count");
  c.block_widths.clear();
  for (long b = 0; b < blocks; ++b) c.block_widths.push_back(static_cast<int>(r.next_integer()));
  r.expect("head");
  c.head_width = static_cast<int>(r.next_integer());
  try {
    c.validate();
  } catch (const std::exception& e) {
    r.fail(e.what());
  }

  std::vector<ConvParams> layers;
  for (std::size_t i = 0; i < c.conv_layer_count(); ++i) {
    r.expect("layer");
    if (r.next_integer() != static_cast<long>(i)) r.fail("layer index out of order");
    r.expect("kernel");
    Shape shape(4);
    for (auto& d : shape) {
      const long v = r.next_integer();
      if (v < 1 || v > 4096) r.fail("implausible kernel dimension");
      d = static_cast<std::size_t>(v);
    }
    std::vector<double> values(element_count(shape));
    for (double& v : values) v = r.next_double();
    r.expect("bias");
    const long nb = r.next_integer();
    if (nb != static_cast<long>(shape[0])) r.fail("bias length does not match kernel");
    std::vector<double> bias(static_cast<std::size_t>(nb));
    for (double& v : bias) v = r.next_double();
    layers.push_back({Tensor(std::move(shape), std::move(values)), std::move(bias)});
  }
  r.expect("end");
  r.expect_end();
  try {
    return Network(std::move(c), std::move(layers));
  } catch (const std::exception& e) {
    r.fail(e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Network& net) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  write_checkpoint(out, net);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read checkpoint " + path.string());
  return read_checkpoint(in, path.string());
}

}  // namespace wsod
