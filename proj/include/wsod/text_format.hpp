#pragma once

// Small helpers shared by the text file formats (embedding, checkpoint,
// prediction dumps, reports).

#include <cctype>
#include <charconv>
#include <cstdint>
#include <istream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace wsod {

/// 17 significant digits: parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

/// Fixed-point rendering for human-facing reports.
inline std::string format_fixed(double v, int digits) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::fixed, digits);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::runtime_error(std::string(what) + ": expected a number, got '" +
                             std::string(text) + "'");
  }
  return v;
}

inline long parse_integer(std::string_view text, std::string_view what) {
  long v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw std::runtime_error(std::string(what) + ": expected an integer, got '" +
                             std::string(text) + "'");
  }
  return v;
}

/// Reads whitespace-separated tokens and remembers the line they came from,
/// so parse errors can name a position.
class TokenReader {
 public:
  TokenReader(std::istream& in, std::string source, long first_line = 1)
      : in_(in), source_(std::move(source)), line_(first_line), token_line_(first_line) {}

  bool next(std::string& token) {
    token.clear();
    int ch;
    while ((ch = in_.get()) != EOF) {
      if (ch == '\n') ++line_;
      if (!std::isspace(ch)) break;
    }
    if (ch == EOF) return false;
    token_line_ = line_;
    token.push_back(static_cast<char>(ch));
    while ((ch = in_.peek()) != EOF && !std::isspace(ch)) token.push_back(static_cast<char>(in_.get()));
    return true;
  }

  std::string next_required(std::string_view what) {
    std::string token;
    if (!next(token)) fail("unexpected end of input, expected " + std::string(what));
    return token;
  }

  double next_double() { return parse_double(next_required("number"), location()); }
  long next_integer() { return parse_integer(next_required("integer"), location()); }

  void expect(std::string_view literal) {
    const std::string token = next_required(literal);
    if (token != literal) fail("expected '" + std::string(literal) + "', got '" + token + "'");
  }

  void expect_end() {
    std::string token;
    if (next(token)) fail("trailing data '" + token + "'");
  }

  [[noreturn]] void fail(const std::string& message) const {
    throw std::runtime_error(location() + ": " + message);
  }

  std::string location() const { return source_ + " line " + std::to_string(token_line_); }

 private:
  std::istream& in_;
  std::string source_;
  long line_;
  long token_line_;
};

}  // namespace wsod
