#pragma once

#include <cstdio>
#include <ostream>
#include <span>
#include <string>

namespace nthlab {

/// Shortest-roundtrip-safe decimal text, independent of the global locale.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv_row(std::ostream& out, std::span<const std::string> cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out << ',';
    out << cells[i];
  }
  out << '\n';
}

}  // namespace nthlab
