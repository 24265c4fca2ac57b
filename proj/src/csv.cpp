#include "sltc/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "sltc/errors.hpp"

namespace sltc {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

}  // namespace

CsvTable CsvTable::read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str(), path.string());
}

CsvTable CsvTable::from_string(const std::string& text, const std::string& origin) {
  CsvTable t;
  t.origin_ = origin;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = end + 1;
    if (line.empty() && pos > text.size()) break;
    ++line_no;
    if (line.empty()) continue;
    auto fields = split_line(line);
    if (t.header_.empty()) {
      t.header_ = std::move(fields);
    } else {
      if (fields.size() != t.header_.size())
        throw SchemaViolation(origin + ": row " + std::to_string(line_no) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(t.header_.size()));
      t.rows_.push_back(std::move(fields));
    }
  }
  if (t.header_.empty()) throw EmptyInput(origin + ": no header row");
  return t;
}

std::size_t CsvTable::col(const std::string& name) const {
  for (std::size_t i = 0; i < header_.size(); ++i)
    if (header_[i] == name) return i;
  throw SchemaViolation(origin_ + ": missing column '" + name + "'");
}

const std::string& CsvTable::cell(std::size_t row, std::size_t column) const {
  return rows_[row][column];
}

double CsvTable::num(std::size_t row, std::size_t column) const {
  const std::string& s = rows_[row][column];
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw SchemaViolation(origin_ + ": row " + std::to_string(row + 2) + " column " +
                          std::to_string(column + 1) + ": '" + s + "' is not a number");
  return v;
}

long long CsvTable::integer(std::size_t row, std::size_t column) const {
  const std::string& s = rows_[row][column];
  long long v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw SchemaViolation(origin_ + ": row " + std::to_string(row + 2) + " column " +
                          std::to_string(column + 1) + ": '" + s + "' is not an integer");
  return v;
}

std::string format_double(double v) {
  if (v == std::floor(v) && std::fabs(v) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.0f", v);
    return buf;
  }
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path), path_(path), n_cols_(header.size()) {
  if (!out_) throw MissingInput("cannot write " + path.string());
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out_ << ',';
    out_ << header[i];
  }
  out_ << '\n';
}

void CsvWriter::field(const std::string& v) {
  if (cur_col_) line_ += ',';
  line_ += v;
  ++cur_col_;
}

void CsvWriter::field(const char* v) { field(std::string(v)); }
void CsvWriter::field(double v) { field(format_double(v)); }
void CsvWriter::field(long long v) { field(std::to_string(v)); }
void CsvWriter::field(std::uint64_t v) { field(std::to_string(v)); }

void CsvWriter::end_row() {
  // Rows hit the stream only once complete, so a failed width check never
  // leaves a partial line in the file.
  if (cur_col_ != n_cols_) {
    std::size_t got = cur_col_;
    cur_col_ = 0;
    line_.clear();
    throw SchemaViolation(path_.string() + ": row with " + std::to_string(got) +
                          " fields, expected " + std::to_string(n_cols_));
  }
  out_ << line_ << '\n';
  cur_col_ = 0;
  line_.clear();
}

void CsvWriter::close() {
  if (out_.is_open()) out_.close();
}

CsvWriter::~CsvWriter() { close(); }

}  // namespace sltc
