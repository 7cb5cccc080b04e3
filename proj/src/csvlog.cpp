#include "neurocodec/csvlog.hpp"

#include <cstdio>

#include "neurocodec/errors.hpp"

namespace neurocodec {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

void CsvWriter::open(const std::string& path, const std::vector<std::string>& header_lines,
                     const std::string& columns) {
  os_.open(path);
  if (!os_) throw ConfigError("cannot open CSV for writing: " + path);
  for (const auto& line : header_lines) os_ << "# " << line << "\n";
  os_ << columns << "\n";
  os_.flush();
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  for (size_t i = 0; i < cells.size(); ++i) {
    if (i) os_ << ",";
    os_ << cells[i];
  }
  os_ << "\n";
  os_.flush();
}

}  // namespace neurocodec
