#include "sltc/adjust.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_map>

#include "sltc/csv.hpp"
#include "sltc/errors.hpp"
#include "sltc/linalg.hpp"
#include "sltc/rng.hpp"

namespace sltc {

namespace {

constexpr std::size_t kNoCol = static_cast<std::size_t>(-1);

}  // namespace

RidgeSolution ridge_solve(const MappingMatrix& a, std::span<const double> y, double lambda,
                          const std::vector<char>* row_mask, std::size_t excluded_col) {
  if (y.size() != a.cols)
    throw DimensionMismatch("gap vector has " + std::to_string(y.size()) + " entries for " +
                            std::to_string(a.cols) + " screenlines");
  if (!(lambda > 0.0)) throw InvalidConfig("lambda must be positive");
  if (row_mask && row_mask->size() != a.rows)
    throw DimensionMismatch("row mask size mismatch");

  // Included-column compaction.
  std::vector<std::size_t> col_of(a.cols, kNoCol);
  std::vector<std::size_t> cols;
  for (std::size_t k = 0; k < a.cols; ++k) {
    if (k == excluded_col) continue;
    col_of[k] = cols.size();
    cols.push_back(k);
  }
  std::size_t m = cols.size();

  auto included = [&](std::size_t l) { return !row_mask || (*row_mask)[l]; };

  // Gram of the included block, built row by row: each class adds one to
  // every pair of screenlines it crosses.
  std::vector<double> gram(m * m, 0.0);
  std::vector<std::uint32_t> rc;
  for (std::size_t l = 0; l < a.rows; ++l) {
    if (!included(l)) continue;
    rc.clear();
    for (std::uint32_t k : a.row_cols[l])
      if (col_of[k] != kNoCol) rc.push_back(static_cast<std::uint32_t>(col_of[k]));
    for (std::uint32_t j : rc)
      for (std::uint32_t k : rc) gram[j * m + k] += 1.0;
  }
  for (std::size_t j = 0; j < m; ++j) gram[j * m + j] += lambda;

  std::vector<double> rhs(m);
  for (std::size_t j = 0; j < m; ++j) rhs[j] = y[cols[j]];

  Spd chol(gram, m);  // gram kept for the residual check
  std::vector<double> w = chol.solve(rhs);

  // The class-dimension residual (AA^T + lambda I)x* - Ay contracts to
  // A ((G + lambda I)w - y): one inner vector, then row sums.
  auto fill = [&](RidgeSolution& s) {
    std::vector<double> inner(m);
    for (std::size_t j = 0; j < m; ++j) {
      double gw = 0.0;
      for (std::size_t k = 0; k < m; ++k) gw += gram[j * m + k] * w[k];
      inner[j] = gw - y[cols[j]];
    }
    s.x_star.assign(a.rows, 0.0);
    double res = 0.0, ay = 0.0;
    for (std::size_t l = 0; l < a.rows; ++l) {
      if (!included(l)) continue;
      double xs = 0.0, rl = 0.0, ayl = 0.0;
      for (std::uint32_t k : a.row_cols[l]) {
        std::size_t j = col_of[k];
        if (j == kNoCol) continue;
        xs += w[j];
        ayl += y[cols[j]];
        rl += inner[j];
      }
      s.x_star[l] = xs;
      res = std::max(res, std::fabs(rl));
      ay = std::max(ay, std::fabs(ayl));
    }
    s.residual_inf = res;
    s.ay_inf = ay;
  };

  RidgeSolution sol;
  fill(sol);
  if (sol.residual_inf > 1e-8 * (1.0 + sol.ay_inf)) {
    // One refinement step on the screenline-dimension system.
    std::vector<double> r(m);
    for (std::size_t j = 0; j < m; ++j) {
      double gw = 0.0;
      for (std::size_t k = 0; k < m; ++k) gw += gram[j * m + k] * w[k];
      r[j] = rhs[j] - gw;
    }
    std::vector<double> corr = chol.solve(r);
    for (std::size_t j = 0; j < m; ++j) w[j] += corr[j];
    fill(sol);
    if (sol.residual_inf > 1e-8 * (1.0 + sol.ay_inf))
      throw Error("ridge solve failed the first-order residual bound");
  }
  return sol;
}

double objective(const MappingMatrix& a, std::span<const double> y, double lambda,
                 std::span<const double> x) {
  if (x.size() != a.rows || y.size() != a.cols)
    throw DimensionMismatch("objective dimensions disagree with the matrix");
  std::vector<double> counts = simulated_counts(a, x);
  double gap = 0.0;
  for (std::size_t k = 0; k < a.cols; ++k)
    gap += (counts[k] - y[k]) * (counts[k] - y[k]);
  double penalty = 0.0;
  for (double v : x) penalty += v * v;
  return gap + lambda * penalty;
}

Adjustment round_and_repair(const MappingMatrix& a, std::span<const double> y, double lambda,
                            const RidgeSolution& initial, std::span<const double> x_o) {
  if (x_o.size() != a.rows) throw DimensionMismatch("class counts do not match matrix rows");

  Adjustment adj;
  adj.pinned.assign(a.rows, 0);
  adj.rounded.resize(a.rows);
  adj.x_star = initial.x_star;

  std::vector<char> free_rows(a.rows, 1);
  std::vector<double> x_star = initial.x_star;
  std::vector<double> y_eff(y.begin(), y.end());

  for (;;) {
    bool repaired = false;
    for (std::size_t l = 0; l < a.rows; ++l) {
      if (!free_rows[l]) continue;
      long long r = std::llround(x_star[l]);  // half away from zero
      if (static_cast<double>(r) < -x_o[l]) {
        // Pin at full removal and move the class's contribution into the gap:
        // the pinned -x^o subtracts from every screenline the class crosses.
        adj.pinned[l] = 1;
        free_rows[l] = 0;
        adj.rounded[l] = -static_cast<long long>(std::llround(x_o[l]));
        adj.x_star[l] = -x_o[l];
        for (std::uint32_t k : a.row_cols[l]) y_eff[k] += x_o[l];
        repaired = true;
      } else {
        adj.rounded[l] = r;
        adj.x_star[l] = x_star[l];
      }
    }
    if (!repaired) break;
    RidgeSolution redo = ridge_solve(a, y_eff, lambda, &free_rows);
    x_star = redo.x_star;
  }
  return adj;
}

TargetTours apply_adjustment(std::span<const NodeTour> tours,
                             std::span<const SlbClass> classes,
                             std::span<const long long> adjustment, std::uint64_t seed) {
  if (adjustment.size() != classes.size())
    throw DimensionMismatch("adjustment entries do not match classes");

  std::unordered_map<long long, const NodeTour*> by_id;
  long long max_id = 0;
  for (const NodeTour& t : tours) {
    by_id[t.id] = &t;
    max_id = std::max(max_id, t.id);
  }

  TargetTours out;
  std::vector<NodeTour> clones;

  for (std::size_t l = 0; l < classes.size(); ++l) {
    const SlbClass& cls = classes[l];
    long long n = adjustment[l];
    if (n == 0) continue;
    if (n < -cls.count)
      throw InfeasibleAdjustment("class " + std::to_string(l) + " cannot lose " +
                                 std::to_string(-n) + " of " + std::to_string(cls.count) +
                                 " tours");
    Rng rng(substream(seed, Stream::AdjustApply, static_cast<std::uint64_t>(l)));
    if (n > 0) {
      std::map<long long, std::vector<long long>> per_source;
      for (long long c = 0; c < n; ++c) {
        long long src = cls.members[rng.below(cls.members.size())];
        NodeTour clone = *by_id.at(src);
        clone.id = ++max_id;
        per_source[src].push_back(clone.id);
        clones.push_back(std::move(clone));
      }
      for (auto& [src, fresh_ids] : per_source)
        out.clone_log.emplace_back(src, std::move(fresh_ids));
    } else {
      auto picks = rng.sample_without_replacement(cls.members.size(),
                                                  static_cast<std::size_t>(-n));
      for (std::size_t p : picks) out.removal_log.push_back(cls.members[p]);
    }
  }

  std::sort(out.removal_log.begin(), out.removal_log.end());
  std::unordered_map<long long, char> removed;
  for (long long id : out.removal_log) removed[id] = 1;

  out.tours.reserve(tours.size() + clones.size() - out.removal_log.size());
  for (const NodeTour& t : tours)
    if (!removed.count(t.id)) out.tours.push_back(t);
  for (NodeTour& c : clones) out.tours.push_back(std::move(c));
  return out;
}

void write_adjustment(const std::filesystem::path& csv, const Adjustment& adj) {
  CsvWriter w(csv, {"class_index", "x_star", "rounded", "pinned_flag"});
  for (std::size_t l = 0; l < adj.rounded.size(); ++l) {
    w.field(static_cast<long long>(l));
    w.field(adj.x_star[l]);
    w.field(adj.rounded[l]);
    w.field(adj.pinned[l] ? 1 : 0);
    w.end_row();
  }
  w.close();
}

void write_clone_log(const std::filesystem::path& csv, const TargetTours& target) {
  CsvWriter w(csv, {"source_tour_id", "new_tour_ids"});
  for (const auto& [src, ids] : target.clone_log) {
    std::string joined;
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (i) joined += ';';
      joined += std::to_string(ids[i]);
    }
    w.field(src);
    w.field(joined);
    w.end_row();
  }
  w.close();
}

void write_removal_log(const std::filesystem::path& csv, const TargetTours& target) {
  CsvWriter w(csv, {"tour_id"});
  for (long long id : target.removal_log) {
    w.field(id);
    w.end_row();
  }
  w.close();
}

}  // namespace sltc
