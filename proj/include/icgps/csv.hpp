#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace icgps {

// Shortest round-trip decimal rendering ('.' decimal separator, no locale).
std::string fmt_double(double v);

std::vector<std::string> split_csv_line(const std::string& line);

// Minimal CSV writer; fields never contain commas or quotes in this project.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& fields);
  void close();

 private:
  std::ofstream out_;
  std::size_t n_cols_;
};

// Refuses to overwrite unless `force`; creates parent directories.
void ensure_writable(const std::string& path, bool force);

}  // namespace icgps
