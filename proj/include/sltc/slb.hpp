#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sltc/demand.hpp"
#include "sltc/network.hpp"

namespace sltc {

/// One unique screenline signature with its count and member tours.
struct SlbClass {
  std::vector<long long> signature;  // ordered screenline ids, multiplicity kept
  long long count;                   // x_l^o == members.size()
  std::vector<long long> members;    // tour ids, ascending
};

struct SlbExtraction {
  std::vector<SlbClass> classes;   // canonical order: lexicographic by signature
  std::vector<long long> unobservable;  // tour ids crossing no screenline
  // Tours whose signature repeats a screenline id: the binary matrix maps
  // them to 1 while a count station would register each pass, so reports
  // surface how many tours are affected.
  long long repeated_crossing_tours = 0;
};

SlbExtraction extract_classes(std::span<const NodeTour> tours, std::span<const Route> routes,
                              const ScreenlineIndex& screenlines);

/// Binary class-by-screenline incidence. Columns follow the screenline
/// index's ascending-id order; rows follow the canonical class order.
struct MappingMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<long long> screenline_ids;
  std::vector<std::vector<std::uint32_t>> row_cols;  // sorted unique column indices
};

MappingMatrix assemble_matrix(std::span<const SlbClass> classes,
                              const ScreenlineIndex& screenlines);

/// A^T x: per-screenline counts implied by per-class counts.
std::vector<double> simulated_counts(const MappingMatrix& a, std::span<const double> x);

std::vector<double> class_counts(const SlbExtraction& extraction);

void write_slb_classes(const std::filesystem::path& csv, const SlbExtraction& extraction);
/// Coordinate sparse text: header line "rows cols nnz", then "row col 1"
/// triples, 1-based, row-major order.
void write_mapping_matrix(const std::filesystem::path& path, const MappingMatrix& a);

}  // namespace sltc
