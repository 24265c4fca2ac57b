#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <unordered_map>
#include <vector>

namespace sltc {

struct RoadNode {
  long long id;
  double x;
  double y;
  long long zone;
};

struct RoadLink {
  long long id;
  long long from;
  long long to;
  double length_m;
  double time_s;
};

/// A set of directed links with an observed daily count. Counts are
/// directional: only traversals of member links are counted.
struct Screenline {
  long long id;
  std::vector<long long> links;
  double observed_count;
};

/// One trip leg: the link sequence of a shortest path between consecutive
/// stops. Empty when origin == dest.
struct RouteLeg {
  long long origin;
  long long dest;
  std::vector<long long> links;
  double time_s = 0.0;
  double length_m = 0.0;
};

struct Route {
  std::vector<RouteLeg> legs;
};

/// Directed road graph with zones. Immutable once constructed; all queries
/// are pure, so callers may evaluate paths for different tours in parallel.
class RoadNetwork {
 public:
  RoadNetwork(std::vector<RoadNode> nodes, std::vector<RoadLink> links);
  static RoadNetwork load(const std::filesystem::path& nodes_csv,
                          const std::filesystem::path& links_csv);

  std::size_t n_nodes() const { return nodes_.size(); }
  std::size_t n_links() const { return links_.size(); }
  const std::vector<RoadNode>& nodes() const { return nodes_; }
  const std::vector<RoadLink>& links() const { return links_; }

  bool has_node(long long id) const { return node_idx_.count(id) != 0; }
  std::size_t node_index(long long id) const;
  std::size_t link_index(long long id) const;
  const RoadNode& node(long long id) const { return nodes_[node_index(id)]; }
  const RoadLink& link(long long id) const { return links_[link_index(id)]; }

  /// Sorted zone ids.
  const std::vector<long long>& zone_ids() const { return zone_ids_; }
  std::size_t zone_index(long long zone) const;
  long long zone_of(long long node_id) const { return node(node_id).zone; }
  /// Lowest node id in the zone.
  long long zone_representative(long long zone) const;
  /// Bounding box of the zone's nodes, floored at 1e4 m2 so densities stay
  /// finite for single-node zones.
  double zone_area_m2(long long zone) const;

  /// Every id in `node_ids` must reach every other; throws
  /// UnreachableDestination naming the first failure.
  void validate_strongly_connected(std::span<const long long> node_ids) const;

  /// Minimum-travel-time leg. Tie-break: at equal cost the predecessor with
  /// the smallest incoming link id wins at every node.
  RouteLeg shortest_path(long long origin, long long dest) const;

  struct SpTree {
    std::size_t source;
    std::vector<double> dist;
    std::vector<std::int32_t> pred_link;  // link index into links(), -1 = none
  };
  SpTree dijkstra(std::size_t source_index) const;
  RouteLeg reconstruct(const SpTree& tree, long long dest_id) const;

 private:
  std::vector<RoadNode> nodes_;
  std::vector<RoadLink> links_;
  std::unordered_map<long long, std::size_t> node_idx_;
  std::unordered_map<long long, std::size_t> link_idx_;
  std::vector<std::vector<std::uint32_t>> out_links_;  // per node, sorted by link id
  std::vector<long long> zone_ids_;
  std::unordered_map<long long, std::size_t> zone_idx_;
  std::vector<long long> zone_rep_;
  std::vector<double> zone_area_;
};

/// Zone-to-zone travel times in seconds between zone representative nodes.
class SkimMatrix {
 public:
  static SkimMatrix build(const RoadNetwork& net);
  double seconds(long long zone_a, long long zone_b) const;
  std::size_t n_zones() const { return zones_.size(); }
  const std::vector<long long>& zones() const { return zones_; }

 private:
  std::vector<long long> zones_;
  std::unordered_map<long long, std::size_t> idx_;
  std::vector<double> t_;  // row-major
};

/// Shortest-path trees from a fixed origin set, built once and then queried
/// read-only (times, min-time-path lengths, reconstructed legs).
class PathIndex {
 public:
  PathIndex(const RoadNetwork& net, std::span<const long long> origin_node_ids);
  double time_s(long long origin, long long dest) const;
  double length_m(long long origin, long long dest) const;
  RouteLeg leg(long long origin, long long dest) const;
  bool has_origin(long long node_id) const { return slot_.count(node_id) != 0; }

 private:
  const RoadNetwork::SpTree& tree(long long origin) const;
  const RoadNetwork* net_;
  std::unordered_map<long long, std::size_t> slot_;
  std::vector<RoadNetwork::SpTree> trees_;
};

/// Validated screenline set: member links exist and are pairwise disjoint
/// across screenlines. Canonical screenline order is by ascending id.
class ScreenlineIndex {
 public:
  ScreenlineIndex(std::span<const Screenline> screenlines, const RoadNetwork& net);

  /// Screenline id of the link, or -1 if the link is not a member of any.
  long long screenline_of_link(long long link_id) const;
  const std::vector<long long>& ids() const { return ids_; }
  std::size_t n() const { return ids_.size(); }
  std::size_t index_of(long long screenline_id) const;
  const std::vector<double>& observed() const { return observed_; }

 private:
  std::vector<long long> ids_;
  std::vector<double> observed_;
  std::unordered_map<long long, long long> link_to_sl_;
  std::unordered_map<long long, std::size_t> idx_;
};

std::vector<Screenline> load_screenlines(const std::filesystem::path& csv);

/// Screenline ids crossed by the route, in travel order, with multiplicity.
std::vector<long long> crossings(const Route& route, const ScreenlineIndex& index);

}  // namespace sltc
