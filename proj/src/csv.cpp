#include "icgps/csv.hpp"

#include <charconv>
#include <filesystem>
#include <stdexcept>

namespace icgps {

std::string fmt_double(double v) {
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      std::string field = line.substr(start, i - start);
      if (!field.empty() && field.back() == '\r') field.pop_back();
      out.push_back(std::move(field));
      start = i + 1;
    }
  }
  return out;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : n_cols_(header.size()) {
  out_.open(path);
  if (!out_) throw std::runtime_error("cannot open for writing: " + path);
  row(header);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != n_cols_) throw std::logic_error("CsvWriter: column count mismatch");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << fields[i];
  }
  out_ << '\n';
}

void CsvWriter::close() { out_.close(); }

void ensure_writable(const std::string& path, bool force) {
  namespace fs = std::filesystem;
  const fs::path p(path);
  if (fs::exists(p) && !force)
    throw std::runtime_error("refusing to overwrite existing file without --force: " + path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

}  // namespace icgps
