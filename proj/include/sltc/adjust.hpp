#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sltc/demand.hpp"
#include "sltc/slb.hpp"

namespace sltc {

struct RidgeSolution {
  std::vector<double> x_star;  // per class; 0 on masked-out rows
  double residual_inf;         // first-order condition residual
  double ay_inf;               // scale reference for the residual bound
};

/// Minimizer of the penalized gap objective. Solved in the screenline
/// dimension: with G = A^T A the solution is x* = A (G + lambda I)^{-1} y,
/// identical to the class-dimension normal equations but |K| x |K| instead of
/// |L| x |L|. Masked rows (0 entries) drop classes; excluded_col drops one
/// screenline from the fit (cross-validation folds).
RidgeSolution ridge_solve(const MappingMatrix& a, std::span<const double> y, double lambda,
                          const std::vector<char>* row_mask = nullptr,
                          std::size_t excluded_col = static_cast<std::size_t>(-1));

/// Penalized objective ||A^T x - y||^2 + lambda ||x||^2.
double objective(const MappingMatrix& a, std::span<const double> y, double lambda,
                 std::span<const double> x);

struct Adjustment {
  std::vector<long long> rounded;  // per class, >= -x^o
  std::vector<char> pinned;        // classes fixed at -x^o during repair
  std::vector<double> x_star;      // final continuous solution, pinned entries -x^o
};

/// Rounds half away from zero, then repeatedly pins classes whose rounded
/// removal exceeds their count (x_i = -x_i^o), moves the pinned contribution
/// into the gap, and re-solves on the free set until feasible.
Adjustment round_and_repair(const MappingMatrix& a, std::span<const double> y, double lambda,
                            const RidgeSolution& initial, std::span<const double> x_o);

struct TargetTours {
  std::vector<NodeTour> tours;
  std::vector<std::pair<long long, std::vector<long long>>> clone_log;  // source -> new ids
  std::vector<long long> removal_log;
};

/// Clones (with replacement) or removes (without) uniformly sampled member
/// tours per class. Deterministic given the seed; each class consumes its own
/// substream.
TargetTours apply_adjustment(std::span<const NodeTour> tours,
                             std::span<const SlbClass> classes,
                             std::span<const long long> adjustment, std::uint64_t seed);

void write_adjustment(const std::filesystem::path& csv, const Adjustment& adj);
void write_clone_log(const std::filesystem::path& csv, const TargetTours& target);
void write_removal_log(const std::filesystem::path& csv, const TargetTours& target);

}  // namespace sltc
