#pragma once

#include <fstream>
#include <string>
#include <vector>

namespace aeae {

/// Shortest decimal-dot text that parses back to the same double.
std::string format_real(double value);

/// Writes a CSV with a fixed header; every row must match its width.
class CsvWriter {
 public:
  CsvWriter(const std::string& path, std::vector<std::string> header);

  CsvWriter& cell(const std::string& text);
  CsvWriter& cell(double value);
  CsvWriter& cell(std::size_t value);
  void end_row();
  void close();

 private:
  std::string path_;
  std::ofstream out_;
  std::size_t width_;
  std::vector<std::string> row_;
};

/// Reads a CSV written by CsvWriter: header row plus records, no quoting.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;
};
CsvTable read_csv(const std::string& path);

}  // namespace aeae
