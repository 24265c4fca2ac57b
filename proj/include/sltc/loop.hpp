#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "sltc/estimate.hpp"
#include "sltc/scenario.hpp"

namespace sltc {

struct Metrics {
  double rmse = 0.0;
  double mae = 0.0;
  double mae_ratio = 0.0;
};

Metrics metrics(std::span<const double> observed, std::span<const double> simulated);

struct CalibrationConfig {
  std::vector<double> lambda_grid;      // empty: default_lambda_grid()
  std::optional<double> fixed_lambda;   // bypasses LOOCV entirely
  double epsilon = -1.0;                // < 0: 0.5% of the mean observed count
  int max_iter = 15;
  bool reselect_lambda = false;         // rerun LOOCV at every adjustment
  std::uint64_t seed = 4242;
};

std::vector<double> default_lambda_grid();

struct LoocvPoint {
  double lambda;
  double cv_rmse;
};

struct LoocvResult {
  double lambda = 0.0;           // argmin, ties to the largest lambda
  std::vector<LoocvPoint> curve; // grid order
};

/// Leave-one-screenline-out selection. Each fold refits the continuous ridge
/// adjustment with one column excluded and scores the held-out line's
/// post-adjustment count predicted through the full matrix.
LoocvResult loocv_lambda(const MappingMatrix& a, std::span<const double> y,
                         std::span<const double> grid);

struct IterationRecord {
  int k = 0;
  Metrics m;
  double lambda = 0.0;  // 0 on the baseline iteration (no adjustment yet)
};

struct CalibrationState {
  std::vector<IterationRecord> history;  // history.size() == iterations run
  double lambda = 0.0;
  LoocvResult loocv;                     // last selection; empty under a fixed lambda
  bool converged = false;
  GenerationParams gen;
  SupplierChoiceParams ssm;
  ShipmentSizeParams size;
  std::vector<EstimationReport> reports;  // one per adjustment iteration
};

/// The two-step calibration driver. Iteration 1 simulates under the
/// scenario's working parameters and records metrics; every later iteration
/// extracts SLB classes, solves and applies the count adjustment, re-estimates
/// the three parameter blocks from the quasi-observations, re-simulates under
/// common random numbers, and re-scores. Stops once |RMSE_k - RMSE_{k-1}|
/// drops below epsilon or max_iter is reached. A failed estimation block keeps
/// its previous parameters and is flagged in the iteration's report; the loop
/// itself never aborts on one.
CalibrationState run_calibration(const Scenario& s, const CalibrationConfig& cfg,
                                 const std::filesystem::path& out_dir);

void write_convergence(const std::filesystem::path& csv,
                       std::span<const IterationRecord> history);
void write_scatter(const std::filesystem::path& csv, std::span<const long long> ids,
                   std::span<const double> observed, std::span<const double> simulated);
void write_loocv_curve(const std::filesystem::path& csv, const LoocvResult& r);

}  // namespace sltc
