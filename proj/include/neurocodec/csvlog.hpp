#ifndef NEUROCODEC_CSVLOG_HPP
#define NEUROCODEC_CSVLOG_HPP

#include <fstream>
#include <string>
#include <vector>

namespace neurocodec {

// Stable numeric formatting for CSV bodies (byte-identical across runs).
std::string fmt_g(double v);

// CSV file with a '#'-prefixed header block (reproducibility info) followed
// by a column line and rows.
class CsvWriter {
 public:
  CsvWriter() = default;
  void open(const std::string& path, const std::vector<std::string>& header_lines,
            const std::string& columns);
  void row(const std::vector<std::string>& cells);
  bool is_open() const { return os_.is_open(); }
  void close() { if (os_.is_open()) os_.close(); }

 private:
  std::ofstream os_;
};

}  // namespace neurocodec

#endif
