#include "wsod/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace wsod {

namespace {

struct NetpbmHeader {
  int width;
  int height;
};

int read_header_int(std::istream& in, const std::filesystem::path& path) {
  int ch;
  while ((ch = in.peek()) != EOF) {
    if (ch == '#') {
      std::string comment;
      std::getline(in, comment);
    } else if (std::isspace(ch)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  if (!(in >> v) || v < 0) throw std::runtime_error(path.string() + ": bad netpbm header");
  return v;
}

NetpbmHeader read_header(std::istream& in, const std::filesystem::path& path, const char* magic) {
  std::string m(2, '\0');
  in.read(m.data(), 2);
  if (!in || m != magic) {
    throw std::runtime_error(path.string() + ": expected " + magic + " image");
  }
  NetpbmHeader h{read_header_int(in, path), read_header_int(in, path)};
  const int maxval = read_header_int(in, path);
  if (maxval != 255) throw std::runtime_error(path.string() + ": only maxval 255 is supported");
  if (h.width < 1 || h.height < 1) throw std::runtime_error(path.string() + ": empty image");
  if (!std::isspace(in.get())) throw std::runtime_error(path.string() + ": bad netpbm header");
  return h;
}

}  // namespace

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_ppm(const std::filesystem::path& path, const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw std::invalid_argument("write_ppm: need 3 x H x W");
  const std::size_t h = rgb.dim(1), w = rgb.dim(2);
  std::vector<char> bytes(3 * h * w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        bytes[(y * w + x) * 3 + c] = static_cast<char>(to_byte(rgb.at(c, y, x)));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P6\n" << w << ' ' << h << "\n255\n";
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const NetpbmHeader hdr = read_header(in, path, "P6");
  const auto h = static_cast<std::size_t>(hdr.height), w = static_cast<std::size_t>(hdr.width);
  std::vector<unsigned char> bytes(3 * h * w);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw std::runtime_error(path.string() + ": truncated pixel data");
  }
  Tensor t({3, h, w});
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) t.at(c, y, x) = bytes[(y * w + x) * 3 + c] / 255.0;
  return t;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& image) {
  if (image.pixels.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw std::invalid_argument("write_pgm: pixel count mismatch");
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

GrayImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const NetpbmHeader hdr = read_header(in, path, "P5");
  GrayImage img{hdr.width, hdr.height,
                std::vector<std::uint8_t>(static_cast<std::size_t>(hdr.width) * hdr.height)};
  in.read(reinterpret_cast<char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw std::runtime_error(path.string() + ": truncated pixel data");
  }
  return img;
}

}  // namespace wsod
