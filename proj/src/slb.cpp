#include "sltc/slb.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <string>

#include "sltc/csv.hpp"
#include "sltc/errors.hpp"

namespace sltc {

SlbExtraction extract_classes(std::span<const NodeTour> tours, std::span<const Route> routes,
                              const ScreenlineIndex& screenlines) {
  if (routes.size() != tours.size())
    throw MissingRoute("have " + std::to_string(routes.size()) + " routes for " +
                       std::to_string(tours.size()) + " tours");

  SlbExtraction out;
  std::map<std::vector<long long>, std::size_t> by_signature;
  for (std::size_t t = 0; t < tours.size(); ++t) {
    std::vector<long long> sig = crossings(routes[t], screenlines);
    if (sig.empty()) {
      out.unobservable.push_back(tours[t].id);
      continue;
    }
    std::vector<long long> sorted = sig;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      ++out.repeated_crossing_tours;

    auto [it, fresh] = by_signature.emplace(std::move(sig), out.classes.size());
    if (fresh) out.classes.push_back({it->first, 0, {}});
    out.classes[it->second].members.push_back(tours[t].id);
  }

  // std::map iteration is already lexicographic; rebuild in that order so the
  // class list is canonical and independent of tour order.
  std::vector<SlbClass> canonical;
  canonical.reserve(out.classes.size());
  for (const auto& [sig, idx] : by_signature) {
    SlbClass c = std::move(out.classes[idx]);
    std::sort(c.members.begin(), c.members.end());
    c.count = static_cast<long long>(c.members.size());
    canonical.push_back(std::move(c));
  }
  out.classes = std::move(canonical);
  std::sort(out.unobservable.begin(), out.unobservable.end());
  return out;
}

MappingMatrix assemble_matrix(std::span<const SlbClass> classes,
                              const ScreenlineIndex& screenlines) {
  MappingMatrix a;
  a.rows = classes.size();
  a.cols = screenlines.n();
  a.screenline_ids = screenlines.ids();
  a.row_cols.resize(a.rows);
  for (std::size_t l = 0; l < classes.size(); ++l) {
    std::vector<std::uint32_t>& cols = a.row_cols[l];
    for (long long sl : classes[l].signature)
      cols.push_back(static_cast<std::uint32_t>(screenlines.index_of(sl)));
    std::sort(cols.begin(), cols.end());
    cols.erase(std::unique(cols.begin(), cols.end()), cols.end());
  }
  return a;
}

std::vector<double> simulated_counts(const MappingMatrix& a, std::span<const double> x) {
  if (x.size() != a.rows)
    throw DimensionMismatch("class count vector has " + std::to_string(x.size()) +
                            " entries for " + std::to_string(a.rows) + " matrix rows");
  std::vector<double> counts(a.cols, 0.0);
  for (std::size_t l = 0; l < a.rows; ++l)
    for (std::uint32_t k : a.row_cols[l]) counts[k] += x[l];
  return counts;
}

std::vector<double> class_counts(const SlbExtraction& extraction) {
  std::vector<double> x(extraction.classes.size());
  for (std::size_t l = 0; l < x.size(); ++l)
    x[l] = static_cast<double>(extraction.classes[l].count);
  return x;
}

void write_slb_classes(const std::filesystem::path& csv, const SlbExtraction& extraction) {
  CsvWriter w(csv, {"class_index", "signature", "count", "member_tour_ids"});
  for (std::size_t l = 0; l < extraction.classes.size(); ++l) {
    const SlbClass& c = extraction.classes[l];
    std::string sig, members;
    for (std::size_t i = 0; i < c.signature.size(); ++i) {
      if (i) sig += ';';
      sig += std::to_string(c.signature[i]);
    }
    for (std::size_t i = 0; i < c.members.size(); ++i) {
      if (i) members += ';';
      members += std::to_string(c.members[i]);
    }
    w.field(static_cast<long long>(l));
    w.field(sig);
    w.field(c.count);
    w.field(members);
    w.end_row();
  }
  w.close();
}

void write_mapping_matrix(const std::filesystem::path& path, const MappingMatrix& a) {
  std::ofstream out(path);
  if (!out) throw MissingInput("cannot write " + path.string());
  std::size_t nnz = 0;
  for (const auto& cols : a.row_cols) nnz += cols.size();
  out << a.rows << ' ' << a.cols << ' ' << nnz << '\n';
  for (std::size_t l = 0; l < a.rows; ++l)
    for (std::uint32_t k : a.row_cols[l]) out << l + 1 << ' ' << k + 1 << " 1\n";
}

}  // namespace sltc
