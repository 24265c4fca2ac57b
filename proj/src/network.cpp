#include "sltc/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

#include "sltc/csv.hpp"
#include "sltc/errors.hpp"

namespace sltc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string id_str(long long id) { return std::to_string(id); }

}  // namespace

RoadNetwork::RoadNetwork(std::vector<RoadNode> nodes, std::vector<RoadLink> links)
    : nodes_(std::move(nodes)), links_(std::move(links)) {
  if (nodes_.empty()) throw EmptyInput("network has no nodes");
  node_idx_.reserve(nodes_.size());
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!node_idx_.emplace(nodes_[i].id, i).second)
      throw SchemaViolation("duplicate node id " + id_str(nodes_[i].id));
  }
  link_idx_.reserve(links_.size());
  out_links_.resize(nodes_.size());
  for (std::size_t i = 0; i < links_.size(); ++i) {
    const RoadLink& l = links_[i];
    if (!link_idx_.emplace(l.id, i).second)
      throw SchemaViolation("duplicate link id " + id_str(l.id));
    if (!has_node(l.from) || !has_node(l.to))
      throw SchemaViolation("link " + id_str(l.id) + " references unknown node");
    if (!(l.length_m > 0.0) || !(l.time_s > 0.0))
      throw SchemaViolation("link " + id_str(l.id) + " needs positive length and travel time");
    out_links_[node_idx_.at(l.from)].push_back(static_cast<std::uint32_t>(i));
  }
  for (auto& out : out_links_) {
    std::sort(out.begin(), out.end(), [&](std::uint32_t a, std::uint32_t b) {
      return links_[a].id < links_[b].id;
    });
  }

  for (const RoadNode& n : nodes_) {
    if (zone_idx_.emplace(n.zone, zone_ids_.size()).second) zone_ids_.push_back(n.zone);
  }
  std::sort(zone_ids_.begin(), zone_ids_.end());
  zone_idx_.clear();
  for (std::size_t z = 0; z < zone_ids_.size(); ++z) zone_idx_[zone_ids_[z]] = z;

  zone_rep_.assign(zone_ids_.size(), std::numeric_limits<long long>::max());
  std::vector<double> min_x(zone_ids_.size(), kInf), max_x(zone_ids_.size(), -kInf);
  std::vector<double> min_y(zone_ids_.size(), kInf), max_y(zone_ids_.size(), -kInf);
  for (const RoadNode& n : nodes_) {
    std::size_t z = zone_idx_.at(n.zone);
    zone_rep_[z] = std::min(zone_rep_[z], n.id);
    min_x[z] = std::min(min_x[z], n.x);
    max_x[z] = std::max(max_x[z], n.x);
    min_y[z] = std::min(min_y[z], n.y);
    max_y[z] = std::max(max_y[z], n.y);
  }
  zone_area_.resize(zone_ids_.size());
  for (std::size_t z = 0; z < zone_ids_.size(); ++z)
    zone_area_[z] = std::max(1e4, (max_x[z] - min_x[z]) * (max_y[z] - min_y[z]));
}

RoadNetwork RoadNetwork::load(const std::filesystem::path& nodes_csv,
                              const std::filesystem::path& links_csv) {
  CsvTable nt = CsvTable::read_file(nodes_csv);
  std::size_t c_id = nt.col("node_id"), c_x = nt.col("x"), c_y = nt.col("y"),
              c_zone = nt.col("zone_id");
  std::vector<RoadNode> nodes;
  nodes.reserve(nt.n_rows());
  for (std::size_t r = 0; r < nt.n_rows(); ++r) {
    nodes.push_back({nt.integer(r, c_id), nt.num(r, c_x), nt.num(r, c_y), nt.integer(r, c_zone)});
  }

  CsvTable lt = CsvTable::read_file(links_csv);
  std::size_t l_id = lt.col("link_id"), l_from = lt.col("from_node"), l_to = lt.col("to_node"),
              l_len = lt.col("length_m"), l_time = lt.col("travel_time_s");
  std::vector<RoadLink> links;
  links.reserve(lt.n_rows());
  for (std::size_t r = 0; r < lt.n_rows(); ++r) {
    links.push_back({lt.integer(r, l_id), lt.integer(r, l_from), lt.integer(r, l_to),
                     lt.num(r, l_len), lt.num(r, l_time)});
  }
  return RoadNetwork(std::move(nodes), std::move(links));
}

std::size_t RoadNetwork::node_index(long long id) const {
  auto it = node_idx_.find(id);
  if (it == node_idx_.end()) throw SchemaViolation("unknown node id " + id_str(id));
  return it->second;
}

std::size_t RoadNetwork::link_index(long long id) const {
  auto it = link_idx_.find(id);
  if (it == link_idx_.end()) throw SchemaViolation("unknown link id " + id_str(id));
  return it->second;
}

std::size_t RoadNetwork::zone_index(long long zone) const {
  auto it = zone_idx_.find(zone);
  if (it == zone_idx_.end()) throw SchemaViolation("unknown zone id " + id_str(zone));
  return it->second;
}

long long RoadNetwork::zone_representative(long long zone) const {
  return zone_rep_[zone_index(zone)];
}

double RoadNetwork::zone_area_m2(long long zone) const { return zone_area_[zone_index(zone)]; }

RoadNetwork::SpTree RoadNetwork::dijkstra(std::size_t source_index) const {
  SpTree tree;
  tree.source = source_index;
  tree.dist.assign(nodes_.size(), kInf);
  tree.pred_link.assign(nodes_.size(), -1);
  tree.dist[source_index] = 0.0;

  using Entry = std::pair<double, std::size_t>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap;
  heap.push({0.0, source_index});
  std::vector<char> settled(nodes_.size(), 0);

  while (!heap.empty()) {
    auto [d, u] = heap.top();
    heap.pop();
    if (settled[u]) continue;
    settled[u] = 1;
    for (std::uint32_t li : out_links_[u]) {
      const RoadLink& l = links_[li];
      std::size_t v = node_idx_.find(l.to)->second;
      double nd = d + l.time_s;
      if (nd < tree.dist[v]) {
        tree.dist[v] = nd;
        tree.pred_link[v] = static_cast<std::int32_t>(li);
        heap.push({nd, v});
      } else if (nd == tree.dist[v] && tree.pred_link[v] >= 0 &&
                 l.id < links_[static_cast<std::size_t>(tree.pred_link[v])].id) {
        // Equal-cost path: keep the smallest incoming link id so repeated
        // runs and reordered inputs reconstruct identical routes.
        tree.pred_link[v] = static_cast<std::int32_t>(li);
      }
    }
  }
  return tree;
}

RouteLeg RoadNetwork::reconstruct(const SpTree& tree, long long dest_id) const {
  std::size_t dest = node_index(dest_id);
  RouteLeg leg;
  leg.origin = nodes_[tree.source].id;
  leg.dest = dest_id;
  if (tree.dist[dest] == kInf)
    throw UnreachableDestination("no route from node " + id_str(leg.origin) + " to node " +
                                 id_str(dest_id));
  std::size_t v = dest;
  while (v != tree.source) {
    std::size_t li = static_cast<std::size_t>(tree.pred_link[v]);
    const RoadLink& l = links_[li];
    leg.links.push_back(l.id);
    leg.length_m += l.length_m;
    v = node_idx_.find(l.from)->second;
  }
  std::reverse(leg.links.begin(), leg.links.end());
  leg.time_s = tree.dist[dest];
  return leg;
}

RouteLeg RoadNetwork::shortest_path(long long origin, long long dest) const {
  SpTree tree = dijkstra(node_index(origin));
  return reconstruct(tree, dest);
}

void RoadNetwork::validate_strongly_connected(std::span<const long long> node_ids) const {
  if (node_ids.empty()) return;
  for (long long src : node_ids) {
    SpTree tree = dijkstra(node_index(src));
    for (long long dst : node_ids) {
      if (tree.dist[node_index(dst)] == kInf)
        throw UnreachableDestination("node " + id_str(dst) + " is unreachable from node " +
                                     id_str(src));
    }
  }
}

SkimMatrix SkimMatrix::build(const RoadNetwork& net) {
  SkimMatrix skim;
  skim.zones_ = net.zone_ids();
  std::size_t n = skim.zones_.size();
  for (std::size_t z = 0; z < n; ++z) skim.idx_[skim.zones_[z]] = z;
  skim.t_.assign(n * n, 0.0);
  for (std::size_t a = 0; a < n; ++a) {
    long long rep = net.zone_representative(skim.zones_[a]);
    RoadNetwork::SpTree tree = net.dijkstra(net.node_index(rep));
    for (std::size_t b = 0; b < n; ++b) {
      long long other = net.zone_representative(skim.zones_[b]);
      double d = tree.dist[net.node_index(other)];
      if (d == std::numeric_limits<double>::infinity())
        throw UnreachableDestination("zone " + std::to_string(skim.zones_[b]) +
                                     " is unreachable from zone " + std::to_string(skim.zones_[a]));
      skim.t_[a * n + b] = d;
    }
  }
  return skim;
}

double SkimMatrix::seconds(long long zone_a, long long zone_b) const {
  auto a = idx_.find(zone_a), b = idx_.find(zone_b);
  if (a == idx_.end() || b == idx_.end())
    throw SchemaViolation("unknown zone id in skim lookup");
  return t_[a->second * zones_.size() + b->second];
}

PathIndex::PathIndex(const RoadNetwork& net, std::span<const long long> origin_node_ids)
    : net_(&net) {
  std::vector<long long> uniq(origin_node_ids.begin(), origin_node_ids.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  trees_.reserve(uniq.size());
  for (long long id : uniq) {
    slot_[id] = trees_.size();
    trees_.push_back(net.dijkstra(net.node_index(id)));
  }
}

const RoadNetwork::SpTree& PathIndex::tree(long long origin) const {
  auto it = slot_.find(origin);
  if (it == slot_.end())
    throw SchemaViolation("node " + std::to_string(origin) + " is not a path index origin");
  return trees_[it->second];
}

double PathIndex::time_s(long long origin, long long dest) const {
  const auto& t = tree(origin);
  double d = t.dist[net_->node_index(dest)];
  if (d == std::numeric_limits<double>::infinity())
    throw UnreachableDestination("no route from node " + std::to_string(origin) + " to node " +
                                 std::to_string(dest));
  return d;
}

double PathIndex::length_m(long long origin, long long dest) const {
  return leg(origin, dest).length_m;
}

RouteLeg PathIndex::leg(long long origin, long long dest) const {
  return net_->reconstruct(tree(origin), dest);
}

ScreenlineIndex::ScreenlineIndex(std::span<const Screenline> screenlines, const RoadNetwork& net) {
  std::vector<const Screenline*> sorted;
  sorted.reserve(screenlines.size());
  for (const Screenline& s : screenlines) sorted.push_back(&s);
  std::sort(sorted.begin(), sorted.end(),
            [](const Screenline* a, const Screenline* b) { return a->id < b->id; });
  for (const Screenline* s : sorted) {
    if (!idx_.emplace(s->id, ids_.size()).second)
      throw SchemaViolation("duplicate screenline id " + std::to_string(s->id));
    if (s->links.empty())
      throw SchemaViolation("screenline " + std::to_string(s->id) + " has no member links");
    for (long long link : s->links) {
      net.link_index(link);
      auto [it, fresh] = link_to_sl_.emplace(link, s->id);
      if (!fresh)
        throw SchemaViolation("link " + std::to_string(link) + " belongs to screenlines " +
                              std::to_string(it->second) + " and " + std::to_string(s->id));
    }
    ids_.push_back(s->id);
    observed_.push_back(s->observed_count);
  }
}

long long ScreenlineIndex::screenline_of_link(long long link_id) const {
  auto it = link_to_sl_.find(link_id);
  return it == link_to_sl_.end() ? -1 : it->second;
}

std::size_t ScreenlineIndex::index_of(long long screenline_id) const {
  auto it = idx_.find(screenline_id);
  if (it == idx_.end())
    throw SchemaViolation("unknown screenline id " + std::to_string(screenline_id));
  return it->second;
}

std::vector<Screenline> load_screenlines(const std::filesystem::path& csv) {
  CsvTable t = CsvTable::read_file(csv);
  std::size_t c_sl = t.col("screenline_id"), c_link = t.col("link_id"),
              c_obs = t.col("observed_count");
  // Rows with the same screenline_id accumulate member links; the observed
  // count must repeat identically on each of them.
  std::vector<Screenline> out;
  std::unordered_map<long long, std::size_t> where;
  for (std::size_t r = 0; r < t.n_rows(); ++r) {
    long long sl = t.integer(r, c_sl);
    double obs = t.num(r, c_obs);
    auto [it, fresh] = where.emplace(sl, out.size());
    if (fresh) {
      out.push_back({sl, {}, obs});
    } else if (out[it->second].observed_count != obs) {
      throw SchemaViolation("screenline " + std::to_string(sl) +
                            " has conflicting observed counts");
    }
    out[it->second].links.push_back(t.integer(r, c_link));
  }
  return out;
}

std::vector<long long> crossings(const Route& route, const ScreenlineIndex& index) {
  std::vector<long long> out;
  for (const RouteLeg& leg : route.legs) {
    for (long long link : leg.links) {
      long long sl = index.screenline_of_link(link);
      if (sl >= 0) out.push_back(sl);
    }
  }
  return out;
}

}  // namespace sltc
