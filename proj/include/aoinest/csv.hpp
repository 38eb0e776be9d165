// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <string>
#include <vector>

#include "aoinest/error.hpp"

namespace aoinest {

/// Shortest round-trippable-enough form used in every CSV: 9 significant digits.
inline std::string fmt_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

class CsvWriter {
 public:
  explicit CsvWriter(const std::string& path) : out_(path) {
    if (!out_) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
    if (!out_) fail(ErrorCode::io, "write failed");
  }
  void row(std::initializer_list<std::string> cells) { row(std::vector<std::string>(cells)); }

 private:
  std::ofstream out_;
};

}  // namespace aoinest
