#pragma once

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "densematch/errors.hpp"
#include "densematch/feature_grid.hpp"

namespace densematch {

// DFG feature text format:
//   line 1: "DFG 1"
//   line 2: "S_h S_w E"
//   then S_h*S_w row-major lines of E reals, single-space separated.
// Values are printed with 17 significant digits so read(write(x)) is
// bit-identical for doubles.

inline void write_dfg(const FeatureGrid& g, std::ostream& out) {
  out << "DFG 1\n";
  out << g.height() << ' ' << g.width() << ' ' << g.dim() << '\n';
  char buf[40];
  for (int i = 0; i < g.cells(); ++i) {
    auto v = g.cell(i);
    for (int d = 0; d < g.dim(); ++d) {
      std::snprintf(buf, sizeof(buf), "%.17g", v[d]);
      if (d > 0) out << ' ';
      out << buf;
    }
    out << '\n';
  }
}

inline void write_dfg_file(const FeatureGrid& g, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open for writing: " + path);
  write_dfg(g, out);
  if (!out) throw IoError("write failed: " + path);
}

inline FeatureGrid read_dfg(std::istream& in) {
  std::string line;
  int lineno = 0;

  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) {
      throw ParseError(lineno + 1, std::string("unexpected end of file, expected ") + what);
    }
    ++lineno;
  };

  next_line("'DFG 1' header");
  if (line != "DFG 1") {
    throw ParseError(lineno, "bad magic, expected 'DFG 1'");
  }

  next_line("grid dimensions 'S_h S_w E'");
  long h = 0, w = 0, e = 0;
  {
    std::istringstream hdr(line);
    std::string extra;
    if (!(hdr >> h >> w >> e) || (hdr >> extra)) {
      throw ParseError(lineno, "expected three integers 'S_h S_w E'");
    }
  }
  if (h < 1 || w < 1 || e < 1 || h > 100000 || w > 100000 || e > 1000000) {
    throw ParseError(lineno, "grid dimensions out of range");
  }

  FeatureGrid g(static_cast<int>(h), static_cast<int>(w), static_cast<int>(e));
  for (int i = 0; i < g.cells(); ++i) {
    next_line("feature row");
    auto v = g.cell(i);
    const char* p = line.c_str();
    for (int d = 0; d < g.dim(); ++d) {
      char* end = nullptr;
      const double x = std::strtod(p, &end);
      if (end == p) {
        throw ParseError(lineno, "expected " + std::to_string(g.dim()) +
                                     " values, got " + std::to_string(d));
      }
      if (!std::isfinite(x)) {
        throw ParseError(lineno, "non-finite value in component " + std::to_string(d));
      }
      v[d] = x;
      p = end;
    }
    while (*p == ' ') ++p;
    if (*p != '\0') {
      throw ParseError(lineno, "trailing data after " + std::to_string(g.dim()) + " values");
    }
  }
  return g;
}

inline FeatureGrid read_dfg_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open for reading: " + path);
  return read_dfg(in);
}

}  // namespace densematch
