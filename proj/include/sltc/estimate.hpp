#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sltc/adjust.hpp"
#include "sltc/demand.hpp"

namespace sltc {

/// How many stops serve each contract across a tour set. On the initial tours
/// this recovers daily_count; on Target Tours clones and removals move it.
std::map<long long, long long> qo_instance_counts(std::span<const NodeTour> tours);

/// Adjusted frequency per contract, parallel to `shipments`: f scaled by the
/// quasi-observed over initial instance ratio. Contracts with no initial
/// instance keep f.
std::vector<double> quasi_shipment_freq(std::span<const Shipment> shipments,
                                        const std::map<long long, long long>& initial,
                                        const std::map<long long, long long>& qo);

/// Adjusted contract size per contract: (f-hat / f) * x_size. Sizes of the
/// underlying shipments stay untouched; only the annual quantity moves.
std::vector<double> quasi_contract_sizes(std::span<const Shipment> shipments,
                                         std::span<const double> f_hat,
                                         std::span<const Contract> contracts);

/// Receiver and supplier aggregates of x-hat, parallel to `ests`. Production
/// sums contracts supplied by the establishment, consumption those received.
EstablishmentFlows quasi_flows(std::span<const Establishment> ests,
                               std::span<const Contract> contracts,
                               std::span<const double> x_hat);

struct EstimationBlock {
  std::string block;  // production | consumption | supplier | shipment_size
  std::string key;    // group or epg
  std::size_t n_obs = 0;
  double fit = 0.0;  // R2 for linear blocks, mean log-likelihood for supplier
  int draws = 0;     // supplier block only
  bool starved = false;
  std::string note;
};
struct EstimationReport {
  std::vector<EstimationBlock> blocks;
};

/// Per-group OLS refit of both generation equations on the quasi aggregates.
/// Groups with too few establishments (or a degenerate design) keep their
/// previous parameters and are flagged in the report.
GenerationParams reestimate_generation(std::span<const Establishment> ests,
                                       std::span<const Contract> contracts,
                                       std::span<const double> x_hat,
                                       const GenerationParams& previous,
                                       EstimationReport* report = nullptr);

struct OriginDistribution {
  std::vector<long long> zones;                   // ascending, all network zones
  std::map<long long, std::vector<double>> rows;  // destination zone -> P over zones
  std::vector<long long> empty_rows;              // destinations without QO shipments

  /// Throws EmptyOriginRow for destinations that received nothing.
  const std::vector<double>& row(long long dest_zone) const;
};

OriginDistribution origin_distribution(const std::map<long long, long long>& qo,
                                       std::span<const Contract> contracts,
                                       std::span<const Establishment> ests,
                                       const RoadNetwork& net);

enum class ReassignOutcome : char {
  reassigned,
  kept_empty_row,     // receiver's zone received no QO shipments
  kept_no_candidate,  // sampled zone offers no supplier of the commodity
  kept_zero_qo,       // contract has no quasi-observed activity
};

struct ReassignResult {
  std::vector<long long> supplier;       // quasi-observed supplier per contract
  std::vector<ReassignOutcome> outcome;  // parallel
};

/// Two-step reassignment: sample an origin zone from the receiver's column of
/// the origin distribution, then a supplier within that zone from the choice
/// probabilities under a fresh error-component draw. Fallbacks keep the
/// current supplier and record why.
ReassignResult reassign_suppliers(std::span<const Contract> contracts,
                                  std::span<const double> x_hat,
                                  const OriginDistribution& dist,
                                  std::span<const Establishment> ests,
                                  const EstablishmentFlows& flows, const SkimMatrix& skim,
                                  const SupplierChoiceParams& p, const SelectionConfig& cfg,
                                  std::uint64_t seed);

struct ChoiceAlternative {
  long long supplier;
  double time_s;
  double production;
  Function fn;
};
struct ChoiceObservation {
  long long contract;
  std::string epg;
  double demand;
  std::uint32_t chosen;  // index into alts
  std::vector<ChoiceAlternative> alts;
  bool short_set = false;
};

/// One observation per contract with quasi-observed activity: the assigned
/// supplier plus distinct same-epg alternatives sampled uniformly without
/// replacement, `set_size` in total when the pool allows.
std::vector<ChoiceObservation> sample_choice_sets(std::span<const Contract> contracts,
                                                  std::span<const double> x_hat,
                                                  const ReassignResult& assigned,
                                                  std::span<const Establishment> ests,
                                                  const EstablishmentFlows& flows,
                                                  const SkimMatrix& skim,
                                                  const SelectionConfig& cfg,
                                                  std::size_t set_size, std::uint64_t seed);

/// Mean simulated log-likelihood over observations; each observation averages
/// the conditional choice probability over `draws` error-component triples
/// from its own substream. Optional analytic gradient in the order (b_time,
/// b_prod, b_demand, b_const, sigma_or, sigma_lf, sigma_dws).
double sml_loglik(std::span<const ChoiceObservation> obs, const SsmParams& p, int draws,
                  std::uint64_t seed, std::span<double> grad = {});

struct SmlOptions {
  int draws = 100;
  std::size_t min_obs = 30;
  double grad_tol = 1e-5;
  int max_iter = 200;
};

struct SmlFit {
  SsmParams params;
  std::array<double, 7> std_err;  // theta order; +inf where unidentified
  double mean_ll;
  std::size_t n_obs;
  int draws;
  int iterations;
};

/// Maximizes the simulated likelihood for one epg by quasi-Newton ascent from
/// `start`. Throws NonConvergence when the gradient tolerance is not reached.
SmlFit fit_supplier_epg(std::span<const ChoiceObservation> obs, const SsmParams& start,
                        const SmlOptions& opt, std::uint64_t seed);

/// Per-epg refit. Starved or non-converged epgs keep their previous
/// parameters and are flagged; sigmas are reported as absolute values.
SupplierChoiceParams reestimate_supplier_model(std::span<const ChoiceObservation> obs,
                                               const SupplierChoiceParams& previous,
                                               const SmlOptions& opt, std::uint64_t seed,
                                               EstimationReport* report = nullptr);

/// Per-group OLS of log shipment size on the quasi contract size and the
/// distance and density attributes. Contracts without quasi-observed activity
/// are excluded.
ShipmentSizeParams reestimate_shipment_size(std::span<const Shipment> shipments,
                                            std::span<const Contract> contracts,
                                            std::span<const double> x_hat,
                                            std::span<const Establishment> ests,
                                            const PathIndex& paths,
                                            const std::map<long long, double>& density,
                                            const ShipmentSizeParams& previous,
                                            std::size_t min_obs = 5,
                                            EstimationReport* report = nullptr);

void write_qo_shipments(const std::filesystem::path& csv, std::span<const Shipment> shipments,
                        std::span<const Contract> contracts, std::span<const double> f_hat,
                        std::span<const double> x_hat, const ReassignResult& assigned);
void write_origin_distribution(const std::filesystem::path& csv, const OriginDistribution& d);
void write_estimation_report(const std::filesystem::path& csv, const EstimationReport& r);

}  // namespace sltc
