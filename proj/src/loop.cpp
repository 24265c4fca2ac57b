#include "sltc/loop.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sltc/csv.hpp"
#include "sltc/errors.hpp"
#include "sltc/rng.hpp"

namespace sltc {

namespace {

constexpr std::size_t kChoiceSetSize = 50;

double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

Metrics metrics(std::span<const double> observed, std::span<const double> simulated) {
  if (observed.empty()) throw EmptyInput("metrics: no screenlines");
  if (observed.size() != simulated.size())
    throw DimensionMismatch("metrics: observed " + std::to_string(observed.size()) +
                            " vs simulated " + std::to_string(simulated.size()));
  double sq = 0.0;
  double abs = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double gap = simulated[i] - observed[i];
    sq += gap * gap;
    abs += std::abs(gap);
  }
  const double n = static_cast<double>(observed.size());
  Metrics m;
  m.rmse = std::sqrt(sq / n);
  m.mae = abs / n;
  m.mae_ratio = m.mae / mean(observed);
  return m;
}

std::vector<double> default_lambda_grid() {
  // Half-decade spacing around the transition from under- to over-smoothing
  // at the default scenario's count scale.
  std::vector<double> grid(7);
  for (int i = 0; i < 7; ++i) grid[i] = std::pow(10.0, -1.0 + 0.5 * i);
  return grid;
}

LoocvResult loocv_lambda(const MappingMatrix& a, std::span<const double> y,
                         std::span<const double> grid) {
  if (a.cols < 2) throw EmptyInput("loocv_lambda: need at least 2 screenlines");
  if (grid.empty()) throw InvalidConfig("loocv_lambda: empty grid");
  for (double l : grid)
    if (!(l > 0.0)) throw InvalidConfig("loocv_lambda: non-positive lambda");

  LoocvResult r;
  r.curve.reserve(grid.size());
  for (double lambda : grid) {
    double sq = 0.0;
    for (std::size_t k = 0; k < a.cols; ++k) {
      const RidgeSolution fold = ridge_solve(a, y, lambda, nullptr, k);
      const std::vector<double> pred = simulated_counts(a, fold.x_star);
      const double err = y[k] - pred[k];
      sq += err * err;
    }
    r.curve.push_back({lambda, std::sqrt(sq / static_cast<double>(a.cols))});
  }
  r.lambda = r.curve.front().lambda;
  double best = r.curve.front().cv_rmse;
  for (const LoocvPoint& p : r.curve) {
    if (p.cv_rmse < best || (p.cv_rmse == best && p.lambda > r.lambda)) {
      best = p.cv_rmse;
      r.lambda = p.lambda;
    }
  }
  return r;
}

void write_convergence(const std::filesystem::path& csv,
                       std::span<const IterationRecord> history) {
  CsvWriter w(csv, {"k", "rmse", "mae", "mae_ratio", "lambda"});
  for (const IterationRecord& rec : history) {
    w.field(rec.k);
    w.field(rec.m.rmse);
    w.field(rec.m.mae);
    w.field(rec.m.mae_ratio);
    w.field(rec.lambda);
    w.end_row();
  }
}

void write_scatter(const std::filesystem::path& csv, std::span<const long long> ids,
                   std::span<const double> observed, std::span<const double> simulated) {
  if (ids.size() != observed.size() || ids.size() != simulated.size())
    throw DimensionMismatch("write_scatter: ragged columns");
  CsvWriter w(csv, {"screenline_id", "observed", "simulated"});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    w.field(ids[i]);
    w.field(observed[i]);
    w.field(simulated[i]);
    w.end_row();
  }
}

void write_loocv_curve(const std::filesystem::path& csv, const LoocvResult& r) {
  CsvWriter w(csv, {"lambda", "cv_rmse"});
  for (const LoocvPoint& p : r.curve) {
    w.field(p.lambda);
    w.field(p.cv_rmse);
    w.end_row();
  }
}

namespace {

/// Rounding can only inflate the count-level objective by the slack the
/// continuous solution leaves; violated means the adjustment pipeline broke.
void check_rounding_slack(const MappingMatrix& a, std::span<const double> y,
                          const Adjustment& adj) {
  std::vector<double> xr(adj.rounded.size());
  for (std::size_t i = 0; i < xr.size(); ++i) xr[i] = static_cast<double>(adj.rounded[i]);
  std::vector<double> d(xr.size());
  for (std::size_t i = 0; i < xr.size(); ++i) d[i] = xr[i] - adj.x_star[i];

  const std::vector<double> at_xr = simulated_counts(a, xr);
  const std::vector<double> at_xs = simulated_counts(a, adj.x_star);
  const std::vector<double> at_d = simulated_counts(a, d);

  std::vector<double> rr(y.size()), rs(y.size());
  for (std::size_t k = 0; k < y.size(); ++k) {
    rr[k] = y[k] - at_xr[k];
    rs[k] = y[k] - at_xs[k];
  }
  const double lhs = norm2(rr) * norm2(rr);
  const double atd = norm2(at_d);
  const double slack = atd * atd + 2.0 * norm2(rs) * atd;
  const double rhs = norm2(y) * norm2(y) + slack;
  if (lhs > rhs * (1.0 + 1e-12) + 1e-9)
    throw InvariantViolation("rounding slack bound violated: " + format_double(lhs) +
                             " > " + format_double(rhs));
}

void write_params(const std::filesystem::path& dir, const GenerationParams& gen,
                  const SupplierChoiceParams& ssm, const ShipmentSizeParams& size) {
  std::filesystem::create_directories(dir);
  write_generation_params(dir / "production.csv", dir / "consumption.csv", gen);
  write_supplier_params(dir / "supplier.csv", ssm);
  write_size_params(dir / "size.csv", size);
}

}  // namespace

CalibrationState run_calibration(const Scenario& s, const CalibrationConfig& cfg,
                                 const std::filesystem::path& out_dir) {
  if (cfg.max_iter < 1) throw InvalidConfig("run_calibration: max_iter must be >= 1");
  if (cfg.fixed_lambda && !(*cfg.fixed_lambda > 0.0))
    throw InvalidConfig("run_calibration: fixed lambda must be positive");
  const std::vector<double> grid =
      cfg.lambda_grid.empty() ? default_lambda_grid() : cfg.lambda_grid;
  for (double l : grid)
    if (!(l > 0.0)) throw InvalidConfig("run_calibration: non-positive lambda in grid");

  std::filesystem::create_directories(out_dir);
  const std::vector<double> observed = s.index.observed();
  const std::vector<long long> sl_ids = s.index.ids();
  const double epsilon = cfg.epsilon >= 0.0 ? cfg.epsilon : 0.005 * mean(observed);

  // Common random numbers: every re-simulation replays the same selection and
  // tour streams, so metric movement is parameter signal, not reseeding noise.
  const std::uint64_t sel_seed =
      mix_seed({cfg.seed, static_cast<std::uint64_t>(Stream::Contracts)});
  const std::uint64_t tf_seed =
      mix_seed({cfg.seed, static_cast<std::uint64_t>(Stream::TourFormation)});

  CalibrationState st;
  st.gen = s.gen;
  st.ssm = s.ssm;
  st.size = s.size;

  SimulationResult sim = simulate_once(s, st.gen, st.ssm, st.size, sel_seed, tf_seed);
  Metrics m = metrics(observed, sim.counts);
  st.history.push_back({1, m, 0.0});
  write_scatter(out_dir / "scatter_1.csv", sl_ids, observed, sim.counts);
  write_convergence(out_dir / "convergence.csv", st.history);

  for (int k = 2; k <= cfg.max_iter; ++k) {
    const std::filesystem::path iter_dir = out_dir / ("iter_" + std::to_string(k));
    std::filesystem::create_directories(iter_dir);
    EstimationReport report;

    const SlbExtraction extraction = extract_classes(sim.tours, sim.routes, s.index);
    if (extraction.classes.empty()) {
      report.blocks.push_back({"adjustment", "*", 0, 0.0, 0, true,
                               "no tour crosses a screenline; iteration is a no-op"});
    } else {
      write_slb_classes(iter_dir / "slb_classes.csv", extraction);
      const MappingMatrix a = assemble_matrix(extraction.classes, s.index);
      write_mapping_matrix(iter_dir / "mapping_matrix.txt", a);
      const std::vector<double> x_o = class_counts(extraction);
      std::vector<double> y(observed.size());
      for (std::size_t i = 0; i < y.size(); ++i) y[i] = observed[i] - sim.counts[i];

      if (cfg.fixed_lambda) {
        st.lambda = *cfg.fixed_lambda;
      } else if (k == 2 || cfg.reselect_lambda) {
        st.loocv = loocv_lambda(a, y, grid);
        st.lambda = st.loocv.lambda;
        write_loocv_curve(out_dir / "loocv_curve.csv", st.loocv);
      }

      const RidgeSolution rs = ridge_solve(a, y, st.lambda);
      const Adjustment adj = round_and_repair(a, y, st.lambda, rs, x_o);
      check_rounding_slack(a, y, adj);
      write_adjustment(iter_dir / "adjustment.csv", adj);

      const TargetTours target =
          apply_adjustment(sim.tours, extraction.classes, adj.rounded,
                           mix_seed({cfg.seed, static_cast<std::uint64_t>(Stream::AdjustApply)}));
      write_clone_log(iter_dir / "clone_log.csv", target);
      write_removal_log(iter_dir / "removal_log.csv", target);

      const std::map<long long, long long> initial = qo_instance_counts(sim.tours);
      const std::map<long long, long long> qo = qo_instance_counts(target.tours);
      const std::vector<double> f_hat = quasi_shipment_freq(sim.shipments, initial, qo);
      const std::vector<double> x_hat =
          quasi_contract_sizes(sim.shipments, f_hat, sim.contracts);

      try {
        st.gen = reestimate_generation(s.ests, sim.contracts, x_hat, st.gen, &report);
      } catch (const Error& e) {
        report.blocks.push_back({"generation", "*", 0, 0.0, 0, true, e.what()});
      }

      ReassignResult assigned;
      try {
        const OriginDistribution dist = origin_distribution(qo, sim.contracts, s.ests, s.net);
        write_origin_distribution(iter_dir / "origin_distribution.csv", dist);
        assigned = reassign_suppliers(
            sim.contracts, x_hat, dist, s.ests, sim.flows, s.skim, st.ssm, s.selection,
            mix_seed({cfg.seed, static_cast<std::uint64_t>(Stream::Reassign)}));
        const std::vector<ChoiceObservation> obs = sample_choice_sets(
            sim.contracts, x_hat, assigned, s.ests, sim.flows, s.skim, s.selection,
            kChoiceSetSize,
            mix_seed({cfg.seed, static_cast<std::uint64_t>(Stream::ChoiceSets)}));
        SmlOptions opt;
        opt.draws = st.ssm.draws;
        st.ssm = reestimate_supplier_model(
            obs, st.ssm, opt,
            mix_seed({cfg.seed, static_cast<std::uint64_t>(Stream::EstimationDraws)}),
            &report);
      } catch (const Error& e) {
        report.blocks.push_back({"supplier", "*", 0, 0.0, 0, true, e.what()});
      }

      try {
        st.size = reestimate_shipment_size(sim.shipments, sim.contracts, x_hat, s.ests,
                                           s.paths, s.density, st.size, 5, &report);
      } catch (const Error& e) {
        report.blocks.push_back({"shipment_size", "*", 0, 0.0, 0, true, e.what()});
      }

      if (!assigned.supplier.empty())
        write_qo_shipments(iter_dir / "qo_shipments.csv", sim.shipments, sim.contracts,
                           f_hat, x_hat, assigned);
    }

    write_estimation_report(iter_dir / "estimation_report.csv", report);
    write_params(iter_dir / "params", st.gen, st.ssm, st.size);
    st.reports.push_back(report);

    sim = simulate_once(s, st.gen, st.ssm, st.size, sel_seed, tf_seed);
    const Metrics prev = m;
    m = metrics(observed, sim.counts);
    st.history.push_back({k, m, st.lambda});
    write_scatter(out_dir / ("scatter_" + std::to_string(k) + ".csv"), sl_ids, observed,
                  sim.counts);
    write_convergence(out_dir / "convergence.csv", st.history);

    if (std::abs(m.rmse - prev.rmse) < epsilon) {
      st.converged = true;
      break;
    }
  }

  write_params(out_dir / "final_params", st.gen, st.ssm, st.size);
  return st;
}

}  // namespace sltc
