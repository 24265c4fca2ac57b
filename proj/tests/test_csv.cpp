#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "sltc/csv.hpp"
#include "sltc/errors.hpp"

using namespace sltc;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("csv: parse, typed access, diagnostics") {
  CsvTable t = CsvTable::from_string("id,weight,name\r\n1,2.5,alpha\n2,-0.25,beta\n\n", "mem");
  CHECK(t.n_rows() == 2);
  CHECK(t.col("weight") == 1);
  CHECK(t.integer(0, 0) == 1);
  CHECK(t.num(1, 1) == -0.25);
  CHECK(t.cell(1, 2) == "beta");

  CHECK_THROWS_AS(t.col("missing"), SchemaViolation);
  CHECK_THROWS_AS(t.integer(0, 2), SchemaViolation);
  CHECK_THROWS_AS(t.num(0, 2), SchemaViolation);
  CHECK_THROWS_AS(CsvTable::from_string("a,b\n1\n", "mem"), SchemaViolation);
  CHECK_THROWS_AS(CsvTable::from_string("", "mem"), EmptyInput);
}

TEST_CASE("csv: writer round-trips doubles and validates row width") {
  auto path = temp_file("sltc_csv_test.csv");
  {
    CsvWriter w(path, {"a", "b", "c"});
    w.field(1.0);
    w.field(0.1);
    w.field("x");
    w.end_row();
    w.field(-12345678901234.0);
    w.field(1.0 / 3.0);
    w.field(std::string("y"));
    w.end_row();
    CHECK_THROWS_AS(
        [&] {
          w.field(1.0);
          w.end_row();
        }(),
        Error);
    w.close();
  }
  CsvTable t = CsvTable::read_file(path);
  CHECK(t.n_rows() == 2);
  CHECK(t.cell(0, 0) == "1");
  CHECK(t.num(0, 1) == 0.1);
  CHECK(t.cell(1, 0) == "-12345678901234");
  CHECK(t.num(1, 1) == 1.0 / 3.0);
  std::filesystem::remove(path);
}

TEST_CASE("csv: identical writes are byte-identical") {
  auto p1 = temp_file("sltc_csv_a.csv");
  auto p2 = temp_file("sltc_csv_b.csv");
  for (const auto& p : {p1, p2}) {
    CsvWriter w(p, {"v"});
    w.field(3.141592653589793);
    w.end_row();
    w.field(1e-17);
    w.end_row();
    w.close();
  }
  CHECK(slurp(p1) == slurp(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("csv: format_double") {
  CHECK(format_double(0.0) == "0");
  CHECK(format_double(42.0) == "42");
  CHECK(format_double(-7.0) == "-7");
  // Round-trip: parsing the text recovers the exact bits.
  for (double v : {0.1, 1.0 / 3.0, 2.5e-308, 9.87654321e12, -1.25}) {
    CHECK(std::stod(format_double(v)) == v);
  }
}
