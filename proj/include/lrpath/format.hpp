#pragma once

#include <charconv>
#include <string>
#include <system_error>

namespace lrpath {

/// Shortest decimal text that parses back to exactly `value`.
inline std::string format_double(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) return std::to_string(value);
  return std::string(buf, end);
}

/// Fixed-point rendering for human-facing tables.
inline std::string format_fixed(double value, int digits) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::fixed, digits);
  if (ec != std::errc()) return std::to_string(value);
  return std::string(buf, end);
}

}  // namespace lrpath
