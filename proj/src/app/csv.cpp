#include <charconv>
#include <sstream>
#include <stdexcept>

#include "aeae/csv.hpp"

namespace aeae {

std::string format_real(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return std::string(buf, end);
}

CsvWriter::CsvWriter(const std::string& path, std::vector<std::string> header)
    : path_(path), out_(path, std::ios::trunc), width_(header.size()) {
  if (!out_) throw std::runtime_error("cannot write " + path);
  row_ = std::move(header);
  end_row();
}

CsvWriter& CsvWriter::cell(const std::string& text) {
  if (text.find_first_of(",\n\"") != std::string::npos) {
    throw std::invalid_argument("csv cell may not contain ',', '\"' or newlines: " + text);
  }
  row_.push_back(text);
  return *this;
}

CsvWriter& CsvWriter::cell(double value) { return cell(format_real(value)); }
CsvWriter& CsvWriter::cell(std::size_t value) { return cell(std::to_string(value)); }

void CsvWriter::end_row() {
  if (row_.size() != width_) {
    throw std::logic_error(path_ + ": row has " + std::to_string(row_.size()) + " cells, header has " +
                           std::to_string(width_));
  }
  for (std::size_t i = 0; i < row_.size(); ++i) out_ << (i ? "," : "") << row_[i];
  out_ << '\n';
  row_.clear();
}

void CsvWriter::close() {
  out_.close();
  if (!out_) throw std::runtime_error("write failed for " + path_);
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i)
    if (header[i] == name) return i;
  throw std::out_of_range("csv has no column " + name);
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  CsvTable table;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (first) {
      table.header = std::move(cells);
      first = false;
    } else {
      table.rows.push_back(std::move(cells));
    }
  }
  return table;
}

}  // namespace aeae
