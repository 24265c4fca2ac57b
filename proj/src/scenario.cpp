#include "sltc/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <utility>

#include "sltc/csv.hpp"
#include "sltc/errors.hpp"
#include "sltc/rng.hpp"

namespace sltc {

namespace {

using nlohmann::json;

std::vector<long long> distinct_nodes(std::span<const Establishment> ests) {
  std::set<long long> s;
  for (const Establishment& e : ests) s.insert(e.node);
  return {s.begin(), s.end()};
}

struct GridLink {
  RoadLink link;
  bool vertical;  // crosses a y boundary (link runs north-south)
  int boundary;   // grid boundary index the link crosses
  bool forward;   // east for horizontal links, north for vertical ones
};

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidConfig(what);
}

void validate(const ScenarioConfig& cfg) {
  require(cfg.nodes_x >= 2 && cfg.nodes_y >= 2, "grid needs at least 2x2 nodes");
  require(cfg.zone_block >= 1, "zone_block must be at least 1");
  int zx = (cfg.nodes_x + cfg.zone_block - 1) / cfg.zone_block;
  int zy = (cfg.nodes_y + cfg.zone_block - 1) / cfg.zone_block;
  require(zx * zy >= 2, "config yields fewer than 2 zones");
  require(cfg.n_screenlines >= 2, "need at least 2 screenlines");
  require(cfg.spacing_m > 0 && cfg.speed_kmh > 0, "spacing and speed must be positive");
  require(cfg.coord_jitter >= 0 && cfg.coord_jitter < 0.5, "coord_jitter must be in [0, 0.5)");
  require(cfg.link_keep > 0 && cfg.link_keep <= 1, "link_keep must be in (0, 1]");
  require(!cfg.groups.empty(), "need at least 1 establishment group");
  int total = 0;
  bool any_carrier = false;
  for (const GroupSpec& g : cfg.groups) {
    require(g.count >= 0, "group count must be non-negative: " + g.name);
    require(g.floor_min > 0 && g.floor_max >= g.floor_min, "bad floor range: " + g.name);
    require(g.emp_min > 0 && g.emp_max >= g.emp_min, "bad employment range: " + g.name);
    require(cfg.gen_truth.production.count(g.name) != 0,
            "missing production truth for group " + g.name);
    require(cfg.gen_truth.consumption.count(g.name) != 0,
            "missing consumption truth for group " + g.name);
    require(cfg.size_truth.by_group.count(g.name) != 0,
            "missing shipment size truth for group " + g.name);
    total += g.count;
    if (g.count > 0 && g.carrier) any_carrier = true;
  }
  require(total >= 1, "no establishments configured");
  require(any_carrier, "no carrier group configured");
  require(!cfg.ssm_truth.by_epg.empty(), "no supplier choice truth configured");
  require(cfg.capacity_kg > 0, "capacity must be positive");
  require(cfg.draws >= 1, "draw count must be at least 1");
  require(cfg.count_noise_sd >= 0, "count_noise_sd must be non-negative");
  require(cfg.perturbation >= 0 && cfg.perturbation < 1, "perturbation must be in [0, 1)");
}

std::vector<RoadNode> grid_nodes(const ScenarioConfig& cfg) {
  std::vector<RoadNode> nodes;
  int zx = (cfg.nodes_x + cfg.zone_block - 1) / cfg.zone_block;
  for (int iy = 0; iy < cfg.nodes_y; ++iy) {
    for (int ix = 0; ix < cfg.nodes_x; ++ix) {
      long long id = static_cast<long long>(iy) * cfg.nodes_x + ix + 1;
      Rng rng = substream(cfg.seed, Stream::SynthNetwork, static_cast<std::uint64_t>(id));
      double jx = (rng.uniform01() * 2 - 1) * cfg.coord_jitter * cfg.spacing_m;
      double jy = (rng.uniform01() * 2 - 1) * cfg.coord_jitter * cfg.spacing_m;
      long long zone = static_cast<long long>(iy / cfg.zone_block) * zx + ix / cfg.zone_block + 1;
      nodes.push_back({id, ix * cfg.spacing_m + jx, iy * cfg.spacing_m + jy, zone});
    }
  }
  return nodes;
}

std::vector<GridLink> grid_links(const ScenarioConfig& cfg, std::span<const RoadNode> nodes) {
  auto at = [&](int ix, int iy) -> const RoadNode& {
    return nodes[static_cast<std::size_t>(iy) * cfg.nodes_x + ix];
  };
  const double speed_ms = cfg.speed_kmh / 3.6;
  std::vector<GridLink> links;
  long long next_id = 0;
  auto add_pair = [&](const RoadNode& a, const RoadNode& b, bool vertical, int boundary) {
    double len = std::hypot(b.x - a.x, b.y - a.y);
    links.push_back({{++next_id, a.id, b.id, len, len / speed_ms}, vertical, boundary, true});
    links.push_back({{++next_id, b.id, a.id, len, len / speed_ms}, vertical, boundary, false});
  };
  for (int iy = 0; iy < cfg.nodes_y; ++iy) {
    for (int ix = 0; ix < cfg.nodes_x; ++ix) {
      if (ix + 1 < cfg.nodes_x) add_pair(at(ix, iy), at(ix + 1, iy), false, ix + 1);
      if (iy + 1 < cfg.nodes_y) add_pair(at(ix, iy), at(ix, iy + 1), true, iy + 1);
    }
  }
  return links;
}

/// Drops whole edges (both directions) at random while keeping the graph
/// connected. Edges always survive or die in pairs, so strong connectivity
/// equals undirected connectivity.
void prune_links(const ScenarioConfig& cfg, std::size_t n_nodes, std::vector<GridLink>& links) {
  if (cfg.link_keep >= 1.0) return;
  auto connected = [&](const std::vector<char>& alive) {
    std::vector<std::vector<int>> adj(n_nodes);
    for (std::size_t i = 0; i < links.size(); i += 2) {
      if (!alive[i / 2]) continue;
      int a = static_cast<int>(links[i].link.from - 1);
      int b = static_cast<int>(links[i].link.to - 1);
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
    std::vector<char> seen(n_nodes, 0);
    std::vector<int> queue = {0};
    seen[0] = 1;
    std::size_t reached = 1;
    while (!queue.empty()) {
      int u = queue.back();
      queue.pop_back();
      for (int v : adj[u])
        if (!seen[v]) {
          seen[v] = 1;
          ++reached;
          queue.push_back(v);
        }
    }
    return reached == n_nodes;
  };

  std::vector<char> alive(links.size() / 2, 1);
  Rng rng = substream(cfg.seed, Stream::SynthNetwork, 0, 1);
  for (std::size_t e = 0; e < alive.size(); ++e) {
    if (rng.uniform01() <= cfg.link_keep) continue;
    alive[e] = 0;
    if (!connected(alive)) alive[e] = 1;
  }
  std::vector<GridLink> kept;
  for (std::size_t i = 0; i < links.size(); ++i)
    if (alive[i / 2]) kept.push_back(links[i]);
  links = std::move(kept);
}

/// Directed cut screenlines over interior grid boundaries, centre boundaries
/// first, alternating the two axes and the two directions.
std::vector<Screenline> make_screenlines(const ScenarioConfig& cfg,
                                         std::span<const GridLink> links) {
  auto ordered = [](int n, double mid) {
    std::vector<int> b;
    for (int i = 1; i < n; ++i) b.push_back(i);
    std::stable_sort(b.begin(), b.end(), [&](int x, int y) {
      return std::fabs(x - mid) < std::fabs(y - mid);
    });
    return b;
  };
  std::vector<int> vx = ordered(cfg.nodes_x, cfg.nodes_x / 2.0);
  std::vector<int> vy = ordered(cfg.nodes_y, cfg.nodes_y / 2.0);

  std::vector<Screenline> out;
  auto add_cut = [&](bool vertical, int boundary, bool forward) {
    Screenline sl{static_cast<long long>(out.size() + 1), {}, 0.0};
    for (const GridLink& g : links)
      if (g.vertical == vertical && g.boundary == boundary && g.forward == forward)
        sl.links.push_back(g.link.id);
    if (!sl.links.empty()) out.push_back(std::move(sl));
  };
  std::size_t ix = 0, iy = 0;
  const std::size_t want = static_cast<std::size_t>(cfg.n_screenlines);
  while (out.size() < want && (ix < vx.size() || iy < vy.size())) {
    if (ix < vx.size()) {
      add_cut(false, vx[ix], true);
      if (out.size() < want) add_cut(false, vx[ix], false);
      ++ix;
    }
    if (out.size() < want && iy < vy.size()) {
      add_cut(true, vy[iy], true);
      if (out.size() < want) add_cut(true, vy[iy], false);
      ++iy;
    }
  }
  if (out.size() < want)
    throw InvalidConfig("grid offers only " + std::to_string(out.size()) +
                        " screenline cuts, config wants " + std::to_string(cfg.n_screenlines));
  return out;
}

std::vector<Establishment> make_establishments(const ScenarioConfig& cfg,
                                               std::span<const RoadNode> nodes) {
  std::vector<Establishment> ests;
  long long id = 0;
  for (const GroupSpec& g : cfg.groups) {
    for (int i = 0; i < g.count; ++i) {
      ++id;
      Rng rng = substream(cfg.seed, Stream::SynthEstablishments, static_cast<std::uint64_t>(id));
      const RoadNode& node = nodes[rng.below(nodes.size())];
      double floor = rng.uniform(g.floor_min, g.floor_max);
      double emp = rng.uniform(g.emp_min, g.emp_max);
      ests.push_back({id, node.id, node.zone, floor, emp, g.name, g.function, g.carrier});
    }
  }
  return ests;
}

void perturb(const ScenarioConfig& cfg, GenerationParams& gen, SupplierChoiceParams& ssm,
             ShipmentSizeParams& size) {
  Rng rng = substream(cfg.seed, Stream::Perturbation);
  auto tweak = [&](double& c) { c *= 1.0 + cfg.perturbation * (rng.uniform01() * 2 - 1); };
  for (auto& [g, p] : gen.production) {
    tweak(p.b_const);
    tweak(p.b_floor);
    tweak(p.b_emp);
    tweak(p.b_floor_emp);
  }
  for (auto& [g, p] : gen.consumption) {
    tweak(p.b_const);
    tweak(p.b_floor);
    tweak(p.b_emp);
    tweak(p.b_floor_emp);
    tweak(p.b_prod);
  }
  for (auto& [epg, p] : ssm.by_epg) {
    tweak(p.b_time);
    tweak(p.b_prod);
    tweak(p.b_demand);
    tweak(p.b_const);
    tweak(p.sigma_or);
    tweak(p.sigma_lf);
    tweak(p.sigma_dws);
    p.sigma_or = std::max(0.0, p.sigma_or);
    p.sigma_lf = std::max(0.0, p.sigma_lf);
    p.sigma_dws = std::max(0.0, p.sigma_dws);
  }
  for (auto& [g, p] : size.by_group) {
    tweak(p.b_const);
    tweak(p.b_size);
    tweak(p.b_dist);
    tweak(p.b_dense);
  }
}

void write_nodes(const std::filesystem::path& csv, std::span<const RoadNode> nodes) {
  CsvWriter w(csv, {"node_id", "x", "y", "zone_id"});
  for (const RoadNode& n : nodes) {
    w.field(n.id);
    w.field(n.x);
    w.field(n.y);
    w.field(n.zone);
    w.end_row();
  }
}

void write_links(const std::filesystem::path& csv, std::span<const GridLink> links) {
  CsvWriter w(csv, {"link_id", "from_node", "to_node", "length_m", "travel_time_s"});
  for (const GridLink& g : links) {
    w.field(g.link.id);
    w.field(g.link.from);
    w.field(g.link.to);
    w.field(g.link.length_m);
    w.field(g.link.time_s);
    w.end_row();
  }
}

void write_screenlines_csv(const std::filesystem::path& csv,
                           std::span<const Screenline> screenlines) {
  CsvWriter w(csv, {"screenline_id", "link_id", "observed_count"});
  for (const Screenline& sl : screenlines) {
    for (long long link : sl.links) {
      w.field(sl.id);
      w.field(link);
      w.field(sl.observed_count);
      w.end_row();
    }
  }
}

json config_json(const ScenarioConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["nodes_x"] = cfg.nodes_x;
  j["nodes_y"] = cfg.nodes_y;
  j["zone_block"] = cfg.zone_block;
  j["spacing_m"] = cfg.spacing_m;
  j["coord_jitter"] = cfg.coord_jitter;
  j["link_keep"] = cfg.link_keep;
  j["speed_kmh"] = cfg.speed_kmh;
  j["n_screenlines"] = cfg.n_screenlines;
  j["capacity_kg"] = cfg.capacity_kg;
  j["draws"] = cfg.draws;
  j["count_noise_sd"] = cfg.count_noise_sd;
  j["perturbation"] = cfg.perturbation;
  j["selection"] = {{"mean_contract_size", cfg.selection.mean_contract_size},
                    {"candidate_cap", cfg.selection.candidate_cap},
                    {"intra_zone_floor_s", cfg.selection.intra_zone_floor_s}};
  json groups = json::array();
  for (const GroupSpec& g : cfg.groups)
    groups.push_back({{"name", g.name},
                      {"function", function_name(g.function)},
                      {"count", g.count},
                      {"carrier", g.carrier},
                      {"floor_min", g.floor_min},
                      {"floor_max", g.floor_max},
                      {"emp_min", g.emp_min},
                      {"emp_max", g.emp_max}});
  j["groups"] = std::move(groups);
  json truth;
  for (const auto& [g, p] : cfg.gen_truth.production)
    truth["production"][g] = {p.b_const, p.b_floor, p.b_emp, p.b_floor_emp};
  for (const auto& [g, p] : cfg.gen_truth.consumption)
    truth["consumption"][g] = {p.b_const, p.b_floor, p.b_emp, p.b_floor_emp, p.b_prod};
  for (const auto& [epg, p] : cfg.ssm_truth.by_epg)
    truth["supplier"][epg] = {p.b_time,   p.b_prod,   p.b_demand, p.b_const,
                              p.sigma_or, p.sigma_lf, p.sigma_dws};
  for (const auto& [g, p] : cfg.size_truth.by_group)
    truth["size"][g] = {p.b_const, p.b_size, p.b_dist, p.b_dense};
  j["truth"] = std::move(truth);
  return j;
}

std::vector<double> number_list(const json& j, const std::string& where, std::size_t n) {
  if (!j.is_array() || j.size() != n)
    throw SchemaViolation(where + " must be a list of " + std::to_string(n) + " numbers");
  std::vector<double> out;
  for (const auto& v : j) {
    if (!v.is_number()) throw SchemaViolation(where + " must hold numbers only");
    out.push_back(v.get<double>());
  }
  return out;
}

void apply_config_json(const json& j, ScenarioConfig& cfg) {
  cfg.seed = j.value("seed", cfg.seed);
  cfg.nodes_x = j.value("nodes_x", cfg.nodes_x);
  cfg.nodes_y = j.value("nodes_y", cfg.nodes_y);
  cfg.zone_block = j.value("zone_block", cfg.zone_block);
  cfg.spacing_m = j.value("spacing_m", cfg.spacing_m);
  cfg.coord_jitter = j.value("coord_jitter", cfg.coord_jitter);
  cfg.link_keep = j.value("link_keep", cfg.link_keep);
  cfg.speed_kmh = j.value("speed_kmh", cfg.speed_kmh);
  cfg.n_screenlines = j.value("n_screenlines", cfg.n_screenlines);
  cfg.capacity_kg = j.value("capacity_kg", cfg.capacity_kg);
  cfg.draws = j.value("draws", cfg.draws);
  cfg.count_noise_sd = j.value("count_noise_sd", cfg.count_noise_sd);
  cfg.perturbation = j.value("perturbation", cfg.perturbation);
  if (j.contains("selection")) {
    const json& s = j.at("selection");
    cfg.selection.mean_contract_size =
        s.value("mean_contract_size", cfg.selection.mean_contract_size);
    cfg.selection.candidate_cap = s.value("candidate_cap", cfg.selection.candidate_cap);
    cfg.selection.intra_zone_floor_s =
        s.value("intra_zone_floor_s", cfg.selection.intra_zone_floor_s);
  }
  if (j.contains("groups")) {
    cfg.groups.clear();
    for (const auto& g : j.at("groups")) {
      GroupSpec spec;
      if (!g.contains("name") || !g.contains("function"))
        throw SchemaViolation("each group needs a name and a function");
      spec.name = g.at("name").get<std::string>();
      spec.function = parse_function(g.at("function").get<std::string>());
      spec.count = g.value("count", 0);
      spec.carrier = g.value("carrier", false);
      spec.floor_min = g.value("floor_min", 100.0);
      spec.floor_max = g.value("floor_max", 1000.0);
      spec.emp_min = g.value("emp_min", 2.0);
      spec.emp_max = g.value("emp_max", 20.0);
      cfg.groups.push_back(std::move(spec));
    }
  }
  if (j.contains("truth")) {
    const json& t = j.at("truth");
    if (t.contains("production")) {
      cfg.gen_truth.production.clear();
      for (const auto& [g, v] : t.at("production").items()) {
        auto b = number_list(v, "truth.production." + g, 4);
        cfg.gen_truth.production[g] = {b[0], b[1], b[2], b[3]};
      }
    }
    if (t.contains("consumption")) {
      cfg.gen_truth.consumption.clear();
      for (const auto& [g, v] : t.at("consumption").items()) {
        auto b = number_list(v, "truth.consumption." + g, 5);
        cfg.gen_truth.consumption[g] = {b[0], b[1], b[2], b[3], b[4]};
      }
    }
    if (t.contains("supplier")) {
      cfg.ssm_truth.by_epg.clear();
      for (const auto& [epg, v] : t.at("supplier").items()) {
        auto b = number_list(v, "truth.supplier." + epg, 7);
        cfg.ssm_truth.by_epg[epg] = {b[0], b[1], b[2], b[3], b[4], b[5], b[6]};
      }
    }
    if (t.contains("size")) {
      cfg.size_truth.by_group.clear();
      for (const auto& [g, v] : t.at("size").items()) {
        auto b = number_list(v, "truth.size." + g, 4);
        cfg.size_truth.by_group[g] = {b[0], b[1], b[2], b[3]};
      }
    }
  }
}

}  // namespace

ScenarioConfig default_scenario_config() {
  ScenarioConfig cfg;
  cfg.groups = {
      {"goods.mfg.factory", Function::factory, 120, false, 2000, 8000, 20, 100},
      {"goods.dst.logistics_facility", Function::logistics_facility, 30, true, 3000, 10000, 10,
       50},
      {"goods.rtl.retail", Function::retail, 200, false, 150, 1200, 3, 20},
      {"goods.ofc.office", Function::office, 150, false, 300, 3000, 5, 60},
  };

  auto& gp = cfg.gen_truth.production;
  gp["goods.mfg.factory"] = {5000, 6.0, 300, 0};
  gp["goods.dst.logistics_facility"] = {3000, 2.0, 200, 0};
  gp["goods.rtl.retail"] = {150, 0.4, 25, 0};
  gp["goods.ofc.office"] = {100, 0.1, 10, 0};
  auto& gc = cfg.gen_truth.consumption;
  gc["goods.mfg.factory"] = {0, 0, 0, 0, 0};
  gc["goods.dst.logistics_facility"] = {0, 0, 0, 0, 0};
  gc["goods.rtl.retail"] = {200, 19.0, 100, 0, 0.2};
  gc["goods.ofc.office"] = {200, 3.2, 120, 0, 0.1};

  auto& epg = cfg.ssm_truth.by_epg;
  epg["goods|retail|factory"] = {-0.90, 0.70, 0.15, 0.0, 0.5, 0.4, 0.3};
  epg["goods|retail|logistics_facility"] = {-0.95, 0.68, 0.15, 0.1, 0.5, 0.4, 0.3};
  epg["goods|retail|retail"] = {-1.0, 0.60, 0.10, 0.0, 0.4, 0.3, 0.3};
  epg["goods|retail|office"] = {-1.0, 0.60, 0.10, -0.2, 0.4, 0.3, 0.3};
  epg["goods|office|factory"] = {-0.85, 0.72, 0.12, 0.0, 0.5, 0.4, 0.3};
  epg["goods|office|logistics_facility"] = {-0.90, 0.70, 0.12, 0.1, 0.5, 0.4, 0.3};
  epg["goods|office|retail"] = {-1.0, 0.60, 0.10, 0.0, 0.4, 0.3, 0.3};
  epg["goods|office|office"] = {-1.0, 0.60, 0.10, -0.2, 0.4, 0.3, 0.3};

  auto& sz = cfg.size_truth.by_group;
  sz["goods.mfg.factory"] = {2.0, 0.30, -0.05, -0.05};
  sz["goods.dst.logistics_facility"] = {2.0, 0.30, -0.05, -0.05};
  sz["goods.rtl.retail"] = {-1.5, 0.35, -0.06, -0.04};
  sz["goods.ofc.office"] = {-1.6, 0.36, -0.08, -0.03};

  cfg.selection.mean_contract_size = 600.0;
  cfg.capacity_kg = 25.0;
  cfg.count_noise_sd = 0.03;
  return cfg;
}

ScenarioConfig load_scenario_config(const std::filesystem::path& json_file) {
  std::ifstream in(json_file);
  if (!in) throw MissingInput("cannot open config " + json_file.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaViolation(json_file.string() + ": " + e.what());
  }
  ScenarioConfig cfg = default_scenario_config();
  apply_config_json(j, cfg);
  validate(cfg);
  return cfg;
}

Scenario::Scenario(RoadNetwork net_in, std::vector<Screenline> screenlines_in,
                   std::vector<Establishment> ests_in, GenerationParams gen_in,
                   SupplierChoiceParams ssm_in, ShipmentSizeParams size_in, double capacity,
                   SelectionConfig selection_in)
    : net(std::move(net_in)),
      screenlines(std::move(screenlines_in)),
      ests(std::move(ests_in)),
      gen(std::move(gen_in)),
      ssm(std::move(ssm_in)),
      size(std::move(size_in)),
      capacity_kg(capacity),
      selection(selection_in),
      skim(SkimMatrix::build(net)),
      index(screenlines, net),
      paths(net, distinct_nodes(ests)),
      density(establishment_density(ests, net)) {}

std::vector<Route> route_tours(std::span<const NodeTour> tours, const PathIndex& paths) {
  std::vector<Route> routes;
  routes.reserve(tours.size());
  for (const NodeTour& t : tours) routes.push_back(route_for_tour(t, paths));
  return routes;
}

std::vector<double> count_crossings(std::span<const Route> routes,
                                    const ScreenlineIndex& index) {
  std::vector<double> counts(index.n(), 0.0);
  for (const Route& r : routes)
    for (long long sl : crossings(r, index)) counts[index.index_of(sl)] += 1.0;
  return counts;
}

SimulationResult simulate_once(const Scenario& s, const GenerationParams& gen,
                               const SupplierChoiceParams& ssm, const ShipmentSizeParams& size,
                               std::uint64_t selection_seed, std::uint64_t tours_seed) {
  SimulationResult r;
  r.flows = freight_generation(s.ests, gen);
  r.contracts = supplier_selection(s.ests, r.flows, s.skim, ssm, s.selection, selection_seed);
  r.shipments = shipment_size_frequency(r.contracts, s.ests, s.paths, s.density, size);
  r.tours = form_tours(r.shipments, r.contracts, s.ests, s.paths, s.capacity_kg, tours_seed);
  r.routes = route_tours(r.tours, s.paths);
  r.counts = count_crossings(r.routes, s.index);
  return r;
}

SynthSummary synth_scenario(const ScenarioConfig& cfg, const std::filesystem::path& out_dir) {
  validate(cfg);

  std::vector<RoadNode> nodes = grid_nodes(cfg);
  std::vector<GridLink> links = grid_links(cfg, nodes);
  prune_links(cfg, nodes.size(), links);
  std::vector<Screenline> screenlines = make_screenlines(cfg, links);
  std::vector<Establishment> ests = make_establishments(cfg, nodes);

  GenerationParams gen_init = cfg.gen_truth;
  SupplierChoiceParams ssm_init = cfg.ssm_truth;
  ShipmentSizeParams size_init = cfg.size_truth;
  ssm_init.draws = cfg.draws;
  perturb(cfg, gen_init, ssm_init, size_init);

  // Observed counts come from the ground-truth simulation plus multiplicative
  // noise, so a recoverable signal exists by construction.
  std::vector<RoadLink> road_links;
  for (const GridLink& g : links) road_links.push_back(g.link);
  SupplierChoiceParams ssm_truth = cfg.ssm_truth;
  ssm_truth.draws = cfg.draws;
  Scenario truth_sc(RoadNetwork(nodes, road_links), screenlines, ests, cfg.gen_truth,
                    ssm_truth, cfg.size_truth, cfg.capacity_kg, cfg.selection);
  SimulationResult observed =
      simulate_once(truth_sc, truth_sc.gen, truth_sc.ssm, truth_sc.size,
                    mix_seed({cfg.seed, static_cast<std::uint64_t>(Stream::ObservedSim), 1}),
                    mix_seed({cfg.seed, static_cast<std::uint64_t>(Stream::ObservedSim), 2}));

  SynthSummary summary;
  for (Screenline& sl : screenlines) {
    double count = observed.counts[truth_sc.index.index_of(sl.id)];
    Rng rng = substream(cfg.seed, Stream::ObservedNoise, static_cast<std::uint64_t>(sl.id));
    sl.observed_count = std::max(0.0, count * (1.0 + cfg.count_noise_sd * rng.normal()));
    summary.observed_total += sl.observed_count;
  }

  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "params");
  write_nodes(out_dir / "nodes.csv", nodes);
  write_links(out_dir / "links.csv", links);
  write_screenlines_csv(out_dir / "screenlines.csv", screenlines);
  write_establishments(out_dir / "establishments.csv", ests);
  write_generation_params(out_dir / "params" / "truth_production.csv",
                          out_dir / "params" / "truth_consumption.csv", cfg.gen_truth);
  write_supplier_params(out_dir / "params" / "truth_supplier.csv", cfg.ssm_truth);
  write_size_params(out_dir / "params" / "truth_size.csv", cfg.size_truth);
  write_generation_params(out_dir / "params" / "initial_production.csv",
                          out_dir / "params" / "initial_consumption.csv", gen_init);
  write_supplier_params(out_dir / "params" / "initial_supplier.csv", ssm_init);
  write_size_params(out_dir / "params" / "initial_size.csv", size_init);

  {
    std::ofstream out(out_dir / "scenario.json");
    out << config_json(cfg).dump(2) << "\n";
  }

  summary.n_nodes = nodes.size();
  summary.n_links = links.size();
  summary.n_zones = truth_sc.net.zone_ids().size();
  summary.n_screenlines = screenlines.size();
  summary.n_establishments = ests.size();
  summary.n_contracts = observed.contracts.size();
  for (const Shipment& sh : observed.shipments)
    summary.n_daily_shipments += static_cast<std::size_t>(sh.daily_count);
  summary.n_tours = observed.tours.size();
  {
    json m;
    m["n_nodes"] = summary.n_nodes;
    m["n_links"] = summary.n_links;
    m["n_zones"] = summary.n_zones;
    m["n_screenlines"] = summary.n_screenlines;
    m["n_establishments"] = summary.n_establishments;
    m["n_contracts"] = summary.n_contracts;
    m["n_daily_shipments"] = summary.n_daily_shipments;
    m["n_tours"] = summary.n_tours;
    m["observed_total"] = summary.observed_total;
    std::ofstream out(out_dir / "manifest.json");
    out << m.dump(2) << "\n";
  }
  return summary;
}

Scenario load_scenario(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  if (!fs::exists(dir / "scenario.json"))
    throw MissingInput("no scenario.json under " + dir.string());
  ScenarioConfig cfg = load_scenario_config(dir / "scenario.json");
  RoadNetwork net = RoadNetwork::load(dir / "nodes.csv", dir / "links.csv");
  std::vector<Screenline> screenlines = load_screenlines(dir / "screenlines.csv");
  std::vector<Establishment> ests = load_establishments(dir / "establishments.csv", net);
  GenerationParams gen = load_generation_params(dir / "params" / "initial_production.csv",
                                                dir / "params" / "initial_consumption.csv");
  SupplierChoiceParams ssm =
      load_supplier_params(dir / "params" / "initial_supplier.csv", cfg.draws);
  ShipmentSizeParams size = load_size_params(dir / "params" / "initial_size.csv");
  net.validate_strongly_connected(distinct_nodes(ests));
  return Scenario(std::move(net), std::move(screenlines), std::move(ests), std::move(gen),
                  std::move(ssm), std::move(size), cfg.capacity_kg, cfg.selection);
}

}  // namespace sltc
