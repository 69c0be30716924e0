#pragma once

// Network checkpoint, plain text, lossless (17 significant digits):
//
//   wsod-checkpoint v1
//   input <width> <height> <channels>
//   classes <C>
//   blocks <count> <width_1> ... <width_count>
//   head <head_width>
//   layer <i> kernel <out> <in> <kh> <kw>
//   <out*in*kh*kw values, row-major>
//   bias <out>
//   <out values>
//   ... (one layer/bias pair per conv layer, in forward order)
//   end
//
// See docs/formats.md.

#include <filesystem>
#include <iosfwd>

#include "wsod/network.hpp"

namespace wsod {

void write_checkpoint(std::ostream& out, const Network& net);
Network read_checkpoint(std::istream& in, const std::string& source = "checkpoint");
void save_checkpoint(const std::filesystem::path& path, const Network& net);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace wsod
