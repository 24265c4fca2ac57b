#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sltc/network.hpp"

namespace sltc {

enum class Function { office, retail, logistics_facility, factory };
Function parse_function(const std::string& name);
const char* function_name(Function f);

struct Establishment {
  long long id;
  long long node;
  long long zone;
  double floor_area;   // m2
  double employment;   // persons
  std::string group;   // "<commodity>.<industry>.<function>"
  Function function;
  bool is_carrier;
};

/// Token before the first '.' of a group label.
std::string commodity_of(const std::string& group);
/// Establishment-pair group label: "<commodity>|<receiver fn>|<supplier fn>".
std::string make_epg(const std::string& commodity, Function receiver_fn, Function supplier_fn);

struct ProdParams {
  double b_const, b_floor, b_emp, b_floor_emp;
};
struct ConsParams {
  double b_const, b_floor, b_emp, b_floor_emp, b_prod;
};
struct GenerationParams {
  std::map<std::string, ProdParams> production;
  std::map<std::string, ConsParams> consumption;
};

/// Parallel to the establishment span they were computed from. kg/year.
struct EstablishmentFlows {
  std::vector<double> production;
  std::vector<double> consumption;
};

struct SsmParams {
  double b_time, b_prod, b_demand, b_const;
  double sigma_or, sigma_lf, sigma_dws;
};
struct SupplierChoiceParams {
  std::map<std::string, SsmParams> by_epg;
  int draws = 100;  // R
};

/// One error-component draw triple, shared by all alternatives of a choice
/// situation. Which components enter a utility depends on the supplier's
/// function type.
struct EtaDraws {
  double eta_or, eta_lf, eta_dws;
};

struct Contract {
  long long id;
  long long receiver;
  long long supplier;
  std::string commodity;
  double x_size;  // kg/year
  std::string epg;
};

struct SizeParams {
  double b_const, b_size, b_dist, b_dense;
};
struct ShipmentSizeParams {
  std::map<std::string, SizeParams> by_group;
};

/// One recurring shipment per contract; daily_count is the realized number
/// of instances on the simulated day (0 or 1).
struct Shipment {
  long long contract;
  double size_kg;
  double freq_per_year;
  int daily_count;
};

struct TourStop {
  long long node;
  std::vector<long long> shipments;  // contract ids served at this stop
};

struct NodeTour {
  long long id;
  long long carrier;
  long long depot;  // node id
  std::vector<TourStop> stops;
  double capacity_kg;
};

EstablishmentFlows freight_generation(std::span<const Establishment> ests,
                                      const GenerationParams& p);

/// V + M for one receiver/supplier pair: systematic part on ln(time),
/// ln(supplier production), ln(demand) plus the error components. The Gumbel
/// term is never sampled; the logit formula absorbs it.
double supplier_utility(const SsmParams& p, double time_s, double supplier_production,
                        double demand, Function supplier_fn, const EtaDraws& draws);

/// Softmax over utilities, conditional on the draw.
std::vector<double> supplier_choice_prob(std::span<const double> utilities);

struct SelectionConfig {
  double mean_contract_size = 5000.0;  // kg/year
  std::size_t candidate_cap = 200;
  double intra_zone_floor_s = 60.0;
};

std::vector<Contract> supplier_selection(std::span<const Establishment> ests,
                                         const EstablishmentFlows& flows, const SkimMatrix& skim,
                                         const SupplierChoiceParams& p,
                                         const SelectionConfig& cfg, std::uint64_t seed);

/// Establishments per km2 of each zone's area.
std::map<long long, double> establishment_density(std::span<const Establishment> ests,
                                                  const RoadNetwork& net);

std::vector<Shipment> shipment_size_frequency(std::span<const Contract> contracts,
                                              std::span<const Establishment> ests,
                                              const PathIndex& paths,
                                              const std::map<long long, double>& density,
                                              const ShipmentSizeParams& p);

/// Realizes each shipment for the simulated day (Bernoulli f/365 from its own
/// substream, written into daily_count), then builds greedy nearest-neighbor
/// tours per carrier with capacity closure.
std::vector<NodeTour> form_tours(std::vector<Shipment>& shipments,
                                 std::span<const Contract> contracts,
                                 std::span<const Establishment> ests, const PathIndex& paths,
                                 double capacity_kg, std::uint64_t seed);

Route route_for_tour(const NodeTour& tour, const PathIndex& paths);

std::vector<Establishment> load_establishments(const std::filesystem::path& csv,
                                               const RoadNetwork& net);
GenerationParams load_generation_params(const std::filesystem::path& production_csv,
                                        const std::filesystem::path& consumption_csv);
SupplierChoiceParams load_supplier_params(const std::filesystem::path& csv, int draws);
ShipmentSizeParams load_size_params(const std::filesystem::path& csv);

void write_establishments(const std::filesystem::path& csv,
                          std::span<const Establishment> ests);
void write_generation_params(const std::filesystem::path& production_csv,
                             const std::filesystem::path& consumption_csv,
                             const GenerationParams& p);
void write_supplier_params(const std::filesystem::path& csv, const SupplierChoiceParams& p);
void write_size_params(const std::filesystem::path& csv, const ShipmentSizeParams& p);

void write_contracts(const std::filesystem::path& csv, std::span<const Contract> contracts);
void write_shipments(const std::filesystem::path& csv, std::span<const Shipment> shipments);
void write_tours(const std::filesystem::path& csv, std::span<const NodeTour> tours);

}  // namespace sltc
