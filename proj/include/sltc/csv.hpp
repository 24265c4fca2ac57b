#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

namespace sltc {

/// In-memory CSV table with a header row. Field values never contain commas,
/// quotes or newlines in any of the project's schemas (lists inside one field
/// use ';'), so no quoting layer is needed.
class CsvTable {
 public:
  static CsvTable read_file(const std::filesystem::path& path);
  static CsvTable from_string(const std::string& text, const std::string& origin);

  const std::vector<std::string>& header() const { return header_; }
  std::size_t n_rows() const { return rows_.size(); }
  const std::vector<std::string>& row(std::size_t i) const { return rows_[i]; }

  /// Column index by name; throws SchemaViolation naming the file and column.
  std::size_t col(const std::string& name) const;
  const std::string& cell(std::size_t row, std::size_t column) const;
  double num(std::size_t row, std::size_t column) const;
  long long integer(std::size_t row, std::size_t column) const;

  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

/// Streams rows to a file; numbers are written in round-trip precision so
/// re-reading reproduces the value and reruns are byte-identical.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void field(const std::string& v);
  void field(const char* v);
  void field(double v);
  void field(long long v);
  void field(std::uint64_t v);
  void field(int v) { field(static_cast<long long>(v)); }
  void end_row();
  void close();
  ~CsvWriter();

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  std::size_t n_cols_;
  std::size_t cur_col_ = 0;
  std::string line_;
};

std::string format_double(double v);

}  // namespace sltc
