#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "sltc/demand.hpp"
#include "sltc/network.hpp"

namespace sltc {

/// One establishment group to synthesize. Attribute draws are uniform over
/// the stated ranges.
struct GroupSpec {
  std::string name;  // commodity.industry.function
  Function function;
  int count;
  bool carrier = false;
  double floor_min, floor_max;  // m2
  double emp_min, emp_max;      // persons
};

struct ScenarioConfig {
  std::uint64_t seed = 4242;

  // Jittered grid network; zones are square blocks of nodes.
  int nodes_x = 10;
  int nodes_y = 8;
  int zone_block = 2;
  double spacing_m = 1500.0;
  double coord_jitter = 0.25;  // fraction of spacing
  double link_keep = 0.92;     // survival probability per grid edge
  double speed_kmh = 40.0;
  int n_screenlines = 12;

  std::vector<GroupSpec> groups;

  double capacity_kg = 6000.0;
  SelectionConfig selection;
  int draws = 100;

  GenerationParams gen_truth;
  SupplierChoiceParams ssm_truth;
  ShipmentSizeParams size_truth;

  double count_noise_sd = 0.05;  // multiplicative noise on observed counts
  double perturbation = 0.3;     // +-fraction applied per initial coefficient
};

/// The tuned default: ~20 zones, 12 screenlines, ~500 establishments.
ScenarioConfig default_scenario_config();

/// Reads a JSON config; absent fields keep their defaults. Throws
/// InvalidConfig or SchemaViolation with the offending field.
ScenarioConfig load_scenario_config(const std::filesystem::path& json_file);

/// A generated scenario directory loaded for simulation. The initial
/// (perturbed) parameters are the working set; ground truth stays on disk.
class Scenario {
 public:
  Scenario(RoadNetwork net_in, std::vector<Screenline> screenlines_in,
           std::vector<Establishment> ests_in, GenerationParams gen_in,
           SupplierChoiceParams ssm_in, ShipmentSizeParams size_in, double capacity,
           SelectionConfig selection_in);
  Scenario(const Scenario&) = delete;
  Scenario& operator=(const Scenario&) = delete;

  RoadNetwork net;
  std::vector<Screenline> screenlines;
  std::vector<Establishment> ests;
  GenerationParams gen;
  SupplierChoiceParams ssm;
  ShipmentSizeParams size;
  double capacity_kg;
  SelectionConfig selection;
  SkimMatrix skim;
  ScreenlineIndex index;
  PathIndex paths;
  std::map<long long, double> density;
};

struct SynthSummary {
  std::size_t n_nodes = 0;
  std::size_t n_links = 0;
  std::size_t n_zones = 0;
  std::size_t n_screenlines = 0;
  std::size_t n_establishments = 0;
  std::size_t n_contracts = 0;
  std::size_t n_daily_shipments = 0;
  std::size_t n_tours = 0;
  double observed_total = 0.0;
};

/// Generates the full scenario directory: network, screenlines with observed
/// counts simulated under ground truth (plus count noise), establishments,
/// truth and perturbed initial parameter files, and a manifest. Deterministic
/// given the config.
SynthSummary synth_scenario(const ScenarioConfig& cfg, const std::filesystem::path& out_dir);

Scenario load_scenario(const std::filesystem::path& dir);

struct SimulationResult {
  EstablishmentFlows flows;
  std::vector<Contract> contracts;
  std::vector<Shipment> shipments;
  std::vector<NodeTour> tours;
  std::vector<Route> routes;   // parallel to tours
  std::vector<double> counts;  // per screenline, index order
};

std::vector<Route> route_tours(std::span<const NodeTour> tours, const PathIndex& paths);
std::vector<double> count_crossings(std::span<const Route> routes, const ScreenlineIndex& index);

/// One pass of the demand chain under the given parameters, routed and
/// counted. `selection_seed` and `tours_seed` own all stochasticity.
SimulationResult simulate_once(const Scenario& s, const GenerationParams& gen,
                               const SupplierChoiceParams& ssm, const ShipmentSizeParams& size,
                               std::uint64_t selection_seed, std::uint64_t tours_seed);

}  // namespace sltc
