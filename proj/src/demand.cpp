#include "sltc/demand.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "sltc/csv.hpp"
#include "sltc/errors.hpp"
#include "sltc/kernels.hpp"
#include "sltc/rng.hpp"

namespace sltc {

namespace {

std::unordered_map<long long, std::size_t> index_by_id(std::span<const Establishment> ests) {
  std::unordered_map<long long, std::size_t> m;
  m.reserve(ests.size());
  for (std::size_t i = 0; i < ests.size(); ++i) {
    if (!m.emplace(ests[i].id, i).second)
      throw SchemaViolation("duplicate establishment id " + std::to_string(ests[i].id));
  }
  return m;
}

std::string join_ids(const std::vector<long long>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(ids[i]);
  }
  return s;
}

}  // namespace

Function parse_function(const std::string& name) {
  if (name == "office") return Function::office;
  if (name == "retail") return Function::retail;
  if (name == "logistics_facility") return Function::logistics_facility;
  if (name == "factory") return Function::factory;
  throw SchemaViolation("unknown function type \"" + name + "\"");
}

const char* function_name(Function f) {
  switch (f) {
    case Function::office: return "office";
    case Function::retail: return "retail";
    case Function::logistics_facility: return "logistics_facility";
    case Function::factory: return "factory";
  }
  throw SchemaViolation("invalid function enum value");
}

std::string commodity_of(const std::string& group) {
  auto dot = group.find('.');
  if (dot == std::string::npos || dot == 0)
    throw SchemaViolation("group \"" + group + "\" is not <commodity>.<industry>.<function>");
  return group.substr(0, dot);
}

std::string make_epg(const std::string& commodity, Function receiver_fn, Function supplier_fn) {
  return commodity + "|" + function_name(receiver_fn) + "|" + function_name(supplier_fn);
}

EstablishmentFlows freight_generation(std::span<const Establishment> ests,
                                      const GenerationParams& p) {
  EstablishmentFlows flows;
  flows.production.resize(ests.size());
  flows.consumption.resize(ests.size());
  for (std::size_t i = 0; i < ests.size(); ++i) {
    const Establishment& e = ests[i];
    auto prod_it = p.production.find(e.group);
    auto cons_it = p.consumption.find(e.group);
    if (prod_it == p.production.end() || cons_it == p.consumption.end())
      throw MissingGroupParams("no generation parameters for group \"" + e.group + "\"");
    const ProdParams& bp = prod_it->second;
    const ConsParams& bc = cons_it->second;
    double prod = bp.b_const + bp.b_floor * e.floor_area + bp.b_emp * e.employment +
                  bp.b_floor_emp * e.floor_area * e.employment;
    prod = std::max(0.0, prod);
    double cons = bc.b_const + bc.b_floor * e.floor_area + bc.b_emp * e.employment +
                  bc.b_floor_emp * e.floor_area * e.employment + bc.b_prod * prod;
    flows.production[i] = prod;
    flows.consumption[i] = std::max(0.0, cons);
  }
  return flows;
}

double supplier_utility(const SsmParams& p, double time_s, double supplier_production,
                        double demand, Function supplier_fn, const EtaDraws& draws) {
  if (!(time_s > 0.0)) throw NonPositiveLogArgument("travel time must be positive");
  if (!(supplier_production > 0.0))
    throw NonPositiveLogArgument("supplier production must be positive");
  if (!(demand > 0.0)) throw NonPositiveLogArgument("contract demand must be positive");
  double v = p.b_time * std::log(time_s) + p.b_prod * std::log(supplier_production) +
             p.b_demand * std::log(demand) + p.b_const;
  double m = 0.0;
  switch (supplier_fn) {
    case Function::office:
    case Function::retail:
      m = p.sigma_or * draws.eta_or + p.sigma_dws * draws.eta_dws;
      break;
    case Function::logistics_facility:
      m = p.sigma_lf * draws.eta_lf + p.sigma_dws * draws.eta_dws;
      break;
    case Function::factory:
      break;
  }
  return v + m;
}

std::vector<double> supplier_choice_prob(std::span<const double> utilities) {
  if (utilities.empty()) throw EmptyInput("no alternatives");
  std::vector<double> p(utilities.size());
  kern::softmax(utilities.data(), p.data(), utilities.size());
  return p;
}

std::vector<Contract> supplier_selection(std::span<const Establishment> ests,
                                         const EstablishmentFlows& flows, const SkimMatrix& skim,
                                         const SupplierChoiceParams& p,
                                         const SelectionConfig& cfg, std::uint64_t seed) {
  if (flows.production.size() != ests.size() || flows.consumption.size() != ests.size())
    throw DimensionMismatch("flows not parallel to establishments");
  if (!(cfg.mean_contract_size > 0.0))
    throw InvalidConfig("mean contract size must be positive");

  std::vector<Contract> contracts;
  long long next_id = 0;
  std::vector<std::size_t> cand;
  std::vector<double> cand_time, util, probs;

  for (std::size_t n = 0; n < ests.size(); ++n) {
    double y_cons = flows.consumption[n];
    if (!(y_cons > 0.0)) continue;
    const Establishment& rec = ests[n];
    std::string commodity = commodity_of(rec.group);

    cand.clear();
    for (std::size_t i = 0; i < ests.size(); ++i) {
      if (i == n || !(flows.production[i] > 0.0)) continue;
      if (commodity_of(ests[i].group) != commodity) continue;
      cand.push_back(i);
    }
    if (cand.empty())
      throw NoCandidateSupplier("no supplier of commodity \"" + commodity +
                                "\" for receiver " + std::to_string(rec.id));

    cand_time.resize(cand.size());
    for (std::size_t c = 0; c < cand.size(); ++c) {
      double t = skim.seconds(rec.zone, ests[cand[c]].zone);
      if (ests[cand[c]].zone == rec.zone) t = std::max(t, cfg.intra_zone_floor_s);
      cand_time[c] = t;
    }
    if (cand.size() > cfg.candidate_cap) {
      std::vector<std::size_t> order(cand.size());
      for (std::size_t c = 0; c < order.size(); ++c) order[c] = c;
      std::nth_element(order.begin(), order.begin() + cfg.candidate_cap - 1, order.end(),
                       [&](std::size_t a, std::size_t b) {
                         if (cand_time[a] != cand_time[b]) return cand_time[a] < cand_time[b];
                         return ests[cand[a]].id < ests[cand[b]].id;
                       });
      order.resize(cfg.candidate_cap);
      std::sort(order.begin(), order.end());  // restore establishment order
      std::vector<std::size_t> kept;
      std::vector<double> kept_time;
      for (std::size_t c : order) {
        kept.push_back(cand[c]);
        kept_time.push_back(cand_time[c]);
      }
      cand = std::move(kept);
      cand_time = std::move(kept_time);
    }

    auto n_contracts =
        static_cast<long long>(std::ceil(y_cons / cfg.mean_contract_size));
    double x_size = y_cons / static_cast<double>(n_contracts);

    for (long long c = 0; c < n_contracts; ++c) {
      ++next_id;
      Rng rng(substream(seed, Stream::Contracts, static_cast<std::uint64_t>(next_id)));
      EtaDraws draws{rng.normal(), rng.normal(), rng.normal()};

      util.resize(cand.size());
      for (std::size_t i = 0; i < cand.size(); ++i) {
        const Establishment& sup = ests[cand[i]];
        auto it = p.by_epg.find(make_epg(commodity, rec.function, sup.function));
        if (it == p.by_epg.end())
          throw MissingGroupParams("no supplier-choice parameters for epg \"" +
                                   make_epg(commodity, rec.function, sup.function) + "\"");
        util[i] = supplier_utility(it->second, cand_time[i], flows.production[cand[i]], x_size,
                                   sup.function, draws);
      }
      probs.resize(util.size());
      kern::softmax(util.data(), probs.data(), util.size());
      std::size_t pick = rng.sample_discrete(probs);
      const Establishment& sup = ests[cand[pick]];
      contracts.push_back({next_id, rec.id, sup.id, commodity, x_size,
                           make_epg(commodity, rec.function, sup.function)});
    }
  }
  return contracts;
}

std::map<long long, double> establishment_density(std::span<const Establishment> ests,
                                                  const RoadNetwork& net) {
  std::map<long long, double> count;
  for (const Establishment& e : ests) count[e.zone] += 1.0;
  for (auto& [zone, c] : count) c /= net.zone_area_m2(zone) / 1e6;
  return count;
}

std::vector<Shipment> shipment_size_frequency(std::span<const Contract> contracts,
                                              std::span<const Establishment> ests,
                                              const PathIndex& paths,
                                              const std::map<long long, double>& density,
                                              const ShipmentSizeParams& p) {
  auto by_id = index_by_id(ests);
  std::vector<Shipment> out;
  out.reserve(contracts.size());
  for (const Contract& c : contracts) {
    const Establishment& rec = ests[by_id.at(c.receiver)];
    const Establishment& sup = ests[by_id.at(c.supplier)];
    auto it = p.by_group.find(rec.group);
    if (it == p.by_group.end())
      throw MissingGroupParams("no shipment-size parameters for group \"" + rec.group + "\"");
    const SizeParams& b = it->second;

    double dist_km = std::max(0.1, paths.length_m(sup.node, rec.node) / 1000.0);
    double dense = density.at(rec.zone);
    double ln_s = b.b_const + b.b_size * std::log(c.x_size) + b.b_dist * std::log(dist_km) +
                  b.b_dense * std::log(dense);
    double s = std::min(std::exp(ln_s), c.x_size);
    out.push_back({c.id, s, c.x_size / s, 0});
  }
  return out;
}

std::vector<NodeTour> form_tours(std::vector<Shipment>& shipments,
                                 std::span<const Contract> contracts,
                                 std::span<const Establishment> ests, const PathIndex& paths,
                                 double capacity_kg, std::uint64_t seed) {
  if (!(capacity_kg > 0.0)) throw InvalidConfig("vehicle capacity must be positive");
  auto by_id = index_by_id(ests);
  std::unordered_map<long long, const Contract*> contract_by_id;
  for (const Contract& c : contracts) contract_by_id[c.id] = &c;

  std::vector<std::size_t> carriers;
  for (std::size_t i = 0; i < ests.size(); ++i)
    if (ests[i].is_carrier) carriers.push_back(i);
  if (carriers.empty()) throw InvalidConfig("no carrier establishments");
  std::sort(carriers.begin(), carriers.end(),
            [&](std::size_t a, std::size_t b) { return ests[a].id < ests[b].id; });

  // Designated carrier per supplier: nearest carrier by travel time from the
  // supplier's node, ties to the smallest carrier id.
  std::unordered_map<long long, std::size_t> carrier_of_supplier;
  auto designate = [&](long long supplier_id) -> std::size_t {
    auto it = carrier_of_supplier.find(supplier_id);
    if (it != carrier_of_supplier.end()) return it->second;
    long long node = ests[by_id.at(supplier_id)].node;
    std::size_t best = carriers.front();
    double best_t = paths.time_s(node, ests[best].node);
    for (std::size_t k = 1; k < carriers.size(); ++k) {
      double t = paths.time_s(node, ests[carriers[k]].node);
      if (t < best_t) {
        best = carriers[k];
        best_t = t;
      }
    }
    carrier_of_supplier.emplace(supplier_id, best);
    return best;
  };

  // Daily realization, then shipments grouped per carrier in contract order.
  std::map<std::size_t, std::vector<std::size_t>> per_carrier;
  for (std::size_t s = 0; s < shipments.size(); ++s) {
    Shipment& sh = shipments[s];
    Rng rng(substream(seed, Stream::DailyShipments, static_cast<std::uint64_t>(sh.contract)));
    sh.daily_count = rng.bernoulli(std::min(1.0, sh.freq_per_year / 365.0)) ? 1 : 0;
    if (sh.daily_count == 0) continue;
    if (sh.size_kg > capacity_kg)
      throw ShipmentExceedsCapacity("shipment of contract " + std::to_string(sh.contract) +
                                    " weighs " + std::to_string(sh.size_kg) + " kg");
    const Contract* c = contract_by_id.at(sh.contract);
    per_carrier[designate(c->supplier)].push_back(s);
  }

  std::vector<NodeTour> tours;
  long long next_tour = 0;
  for (auto& [carrier_idx, pending_idx] : per_carrier) {
    const Establishment& carrier = ests[carrier_idx];
    struct Pending {
      std::size_t ship;
      long long contract;
      long long node;
      double weight;
      bool served = false;
    };
    std::vector<Pending> pending;
    for (std::size_t s : pending_idx) {
      const Contract* c = contract_by_id.at(shipments[s].contract);
      pending.push_back(
          {s, c->id, ests[by_id.at(c->receiver)].node, shipments[s].size_kg, false});
    }
    std::size_t left = pending.size();

    while (left > 0) {
      NodeTour tour;
      tour.id = ++next_tour;
      tour.carrier = carrier.id;
      tour.depot = carrier.node;
      tour.capacity_kg = capacity_kg;
      double load = 0.0;
      long long cur = carrier.node;

      for (;;) {
        // Nearest node holding at least one unserved shipment that still
        // fits; ties to the smallest node id.
        long long best_node = -1;
        double best_t = 0.0;
        for (const Pending& q : pending) {
          if (q.served || load + q.weight > capacity_kg) continue;
          double t = paths.time_s(cur, q.node);
          if (best_node < 0 || t < best_t || (t == best_t && q.node < best_node)) {
            best_node = q.node;
            best_t = t;
          }
        }
        if (best_node < 0) break;

        TourStop stop;
        stop.node = best_node;
        for (Pending& q : pending) {
          if (q.served || q.node != best_node || load + q.weight > capacity_kg) continue;
          q.served = true;
          --left;
          load += q.weight;
          stop.shipments.push_back(q.contract);
        }
        tour.stops.push_back(std::move(stop));
        cur = best_node;
      }
      tours.push_back(std::move(tour));
    }
  }
  return tours;
}

Route route_for_tour(const NodeTour& tour, const PathIndex& paths) {
  Route route;
  long long cur = tour.depot;
  for (const TourStop& stop : tour.stops) {
    route.legs.push_back(paths.leg(cur, stop.node));
    cur = stop.node;
  }
  route.legs.push_back(paths.leg(cur, tour.depot));
  return route;
}

std::vector<Establishment> load_establishments(const std::filesystem::path& csv,
                                               const RoadNetwork& net) {
  CsvTable t = CsvTable::read_file(csv);
  std::size_t c_id = t.col("id"), c_node = t.col("node_id"), c_floor = t.col("floor_area_m2"),
              c_emp = t.col("employment"), c_group = t.col("group"),
              c_fn = t.col("function"), c_carrier = t.col("is_carrier");
  std::vector<Establishment> out;
  out.reserve(t.n_rows());
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    Establishment e;
    e.id = t.integer(r, c_id);
    e.node = t.integer(r, c_node);
    e.zone = net.zone_of(e.node);
    e.floor_area = t.num(r, c_floor);
    e.employment = t.num(r, c_emp);
    e.group = t.cell(r, c_group);
    e.function = parse_function(t.cell(r, c_fn));
    e.is_carrier = t.integer(r, c_carrier) != 0;
    if (!(e.floor_area > 0.0) || !(e.employment > 0.0))
      throw SchemaViolation(csv.string() + ": establishment " + std::to_string(e.id) +
                            " needs positive floor area and employment");
    commodity_of(e.group);
    out.push_back(std::move(e));
  }
  return out;
}

GenerationParams load_generation_params(const std::filesystem::path& production_csv,
                                        const std::filesystem::path& consumption_csv) {
  GenerationParams p;
  {
    CsvTable t = CsvTable::read_file(production_csv);
    std::size_t g = t.col("group"), c0 = t.col("b_const"), c1 = t.col("b_floor"),
                c2 = t.col("b_emp"), c3 = t.col("b_floor_emp");
    for (std::size_t r = 0; r < t.n_rows(); ++r)
      p.production[t.cell(r, g)] = {t.num(r, c0), t.num(r, c1), t.num(r, c2), t.num(r, c3)};
  }
  {
    CsvTable t = CsvTable::read_file(consumption_csv);
    std::size_t g = t.col("group"), c0 = t.col("b_const"), c1 = t.col("b_floor"),
                c2 = t.col("b_emp"), c3 = t.col("b_floor_emp"), c4 = t.col("b_prod");
    for (std::size_t r = 0; r < t.n_rows(); ++r)
      p.consumption[t.cell(r, g)] = {t.num(r, c0), t.num(r, c1), t.num(r, c2), t.num(r, c3),
                                     t.num(r, c4)};
  }
  return p;
}

SupplierChoiceParams load_supplier_params(const std::filesystem::path& csv, int draws) {
  SupplierChoiceParams p;
  p.draws = draws;
  CsvTable t = CsvTable::read_file(csv);
  std::size_t g = t.col("epg"), c0 = t.col("b_time"), c1 = t.col("b_prod"),
              c2 = t.col("b_demand"), c3 = t.col("b_const"), s0 = t.col("sigma_or"),
              s1 = t.col("sigma_lf"), s2 = t.col("sigma_dws");
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    SsmParams b{t.num(r, c0), t.num(r, c1), t.num(r, c2), t.num(r, c3),
                t.num(r, s0), t.num(r, s1), t.num(r, s2)};
    if (b.sigma_or < 0.0 || b.sigma_lf < 0.0 || b.sigma_dws < 0.0)
      throw SchemaViolation(csv.string() + ": sigma must be non-negative in row " +
                            std::to_string(r + 2));
    p.by_epg[t.cell(r, g)] = b;
  }
  return p;
}

ShipmentSizeParams load_size_params(const std::filesystem::path& csv) {
  ShipmentSizeParams p;
  CsvTable t = CsvTable::read_file(csv);
  std::size_t g = t.col("group"), c0 = t.col("b_const"), c1 = t.col("b_size"),
              c2 = t.col("b_dist"), c3 = t.col("b_dense");
  for (std::size_t r = 0; r < t.n_rows(); ++r)
    p.by_group[t.cell(r, g)] = {t.num(r, c0), t.num(r, c1), t.num(r, c2), t.num(r, c3)};
  return p;
}

void write_establishments(const std::filesystem::path& csv,
                          std::span<const Establishment> ests) {
  CsvWriter w(csv, {"id", "node_id", "floor_area_m2", "employment", "group", "function",
                    "is_carrier"});
  for (const Establishment& e : ests) {
    w.field(e.id);
    w.field(e.node);
    w.field(e.floor_area);
    w.field(e.employment);
    w.field(e.group);
    w.field(function_name(e.function));
    w.field(e.is_carrier ? 1 : 0);
    w.end_row();
  }
  w.close();
}

void write_generation_params(const std::filesystem::path& production_csv,
                             const std::filesystem::path& consumption_csv,
                             const GenerationParams& p) {
  {
    CsvWriter w(production_csv, {"group", "b_const", "b_floor", "b_emp", "b_floor_emp"});
    for (const auto& [g, b] : p.production) {
      w.field(g);
      w.field(b.b_const);
      w.field(b.b_floor);
      w.field(b.b_emp);
      w.field(b.b_floor_emp);
      w.end_row();
    }
    w.close();
  }
  CsvWriter w(consumption_csv,
              {"group", "b_const", "b_floor", "b_emp", "b_floor_emp", "b_prod"});
  for (const auto& [g, b] : p.consumption) {
    w.field(g);
    w.field(b.b_const);
    w.field(b.b_floor);
    w.field(b.b_emp);
    w.field(b.b_floor_emp);
    w.field(b.b_prod);
    w.end_row();
  }
  w.close();
}

void write_supplier_params(const std::filesystem::path& csv, const SupplierChoiceParams& p) {
  CsvWriter w(csv, {"epg", "b_time", "b_prod", "b_demand", "b_const", "sigma_or", "sigma_lf",
                    "sigma_dws"});
  for (const auto& [g, b] : p.by_epg) {
    w.field(g);
    w.field(b.b_time);
    w.field(b.b_prod);
    w.field(b.b_demand);
    w.field(b.b_const);
    w.field(b.sigma_or);
    w.field(b.sigma_lf);
    w.field(b.sigma_dws);
    w.end_row();
  }
  w.close();
}

void write_size_params(const std::filesystem::path& csv, const ShipmentSizeParams& p) {
  CsvWriter w(csv, {"group", "b_const", "b_size", "b_dist", "b_dense"});
  for (const auto& [g, b] : p.by_group) {
    w.field(g);
    w.field(b.b_const);
    w.field(b.b_size);
    w.field(b.b_dist);
    w.field(b.b_dense);
    w.end_row();
  }
  w.close();
}

void write_contracts(const std::filesystem::path& csv, std::span<const Contract> contracts) {
  CsvWriter w(csv, {"contract_id", "receiver_id", "supplier_id", "commodity", "epg",
                    "x_size_kg"});
  for (const Contract& c : contracts) {
    w.field(c.id);
    w.field(c.receiver);
    w.field(c.supplier);
    w.field(c.commodity);
    w.field(c.epg);
    w.field(c.x_size);
    w.end_row();
  }
  w.close();
}

void write_shipments(const std::filesystem::path& csv, std::span<const Shipment> shipments) {
  CsvWriter w(csv, {"contract_id", "size_kg", "freq_per_year", "daily_count"});
  for (const Shipment& s : shipments) {
    w.field(s.contract);
    w.field(s.size_kg);
    w.field(s.freq_per_year);
    w.field(s.daily_count);
    w.end_row();
  }
  w.close();
}

void write_tours(const std::filesystem::path& csv, std::span<const NodeTour> tours) {
  CsvWriter w(csv, {"tour_id", "seq", "node_id", "shipment_ids"});
  for (const NodeTour& t : tours) {
    w.field(t.id);
    w.field(0);
    w.field(t.depot);
    w.field("");
    w.end_row();
    int seq = 0;
    for (const TourStop& stop : t.stops) {
      w.field(t.id);
      w.field(++seq);
      w.field(stop.node);
      w.field(join_ids(stop.shipments));
      w.end_row();
    }
  }
  w.close();
}

}  // namespace sltc
