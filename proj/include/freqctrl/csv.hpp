#pragma once

#include <charconv>
#include <fstream>
#include <string>
#include <vector>

#include "freqctrl/core.hpp"

namespace freqctrl {

// Shortest round-trip decimal form, so outputs are reproducible byte for
// byte and parse back exactly.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header)
      : out_(path, std::ios::trunc), path_(path) {
    if (!out_) throw IoError("cannot open CSV for writing: " + path);
    write_cells(header);
  }

  void row(const std::vector<std::string>& cells) { write_cells(cells); }

  void close() {
    out_.close();
    if (out_.fail()) throw IoError("failed writing CSV: " + path_);
  }

 private:
  void write_cells(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ',';
      out_ << cells[i];
    }
    out_ << '\n';
  }

  std::ofstream out_;
  std::string path_;
};

}  // namespace freqctrl
