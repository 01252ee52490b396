#pragma once

#include <cstddef>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace rolldrop {

// Shortest round-trippable decimal for a double ("%.17g" trimmed).
std::string format_double(double v);

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header,
            bool append = false);
  void row(std::initializer_list<double> values);
  void row(std::span<const double> values);
  void row_cells(const std::vector<std::string>& cells);
  void flush() { out_.flush(); }

 private:
  std::ofstream out_;
  std::size_t columns_;
};

// Numeric CSV table. Cells that are not numbers are kept as text.
struct CsvTable {
  std::string source;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t index_of(const std::string& column) const;  // throws ParseError
  void require_columns(const std::vector<std::string>& columns) const;
  // Parses every cell of the column as a double; errors carry the line number.
  std::vector<double> column(const std::string& name) const;
  bool has_column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text, const std::string& source = "<memory>");
CsvTable read_csv(const std::filesystem::path& path);

}  // namespace rolldrop
