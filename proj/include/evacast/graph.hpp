#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "evacast/csv.hpp"
#include "evacast/geo.hpp"

namespace evacast {

enum class Direction { North, South, East, West };

inline Direction parse_direction(const std::string& s) {
  if (s == "NB" || s == "N" || s == "Northbound") return Direction::North;
  if (s == "SB" || s == "S" || s == "Southbound") return Direction::South;
  if (s == "EB" || s == "E" || s == "Eastbound") return Direction::East;
  if (s == "WB" || s == "W" || s == "Westbound") return Direction::West;
  throw std::invalid_argument("unknown travel direction: '" + s + "'");
}

inline const char* direction_str(Direction d) {
  switch (d) {
    case Direction::North: return "NB";
    case Direction::South: return "SB";
    case Direction::East: return "EB";
    case Direction::West: return "WB";
  }
  return "?";
}

struct DetectorNode {
  std::string detector_id;
  std::string corridor;
  Direction direction = Direction::North;
  double milepost_miles = 0.0;
  int lane_count = 1;
  LatLon position;
};

struct Edge {
  std::size_t from = 0;
  std::size_t to = 0;
  double distance_miles = 0.0;
};

// Detector network. Node index order is fixed at construction and is the
// canonical ordering for every node-indexed tensor and matrix downstream.
// Edges run between consecutive detectors of the same corridor and
// direction, directed along increasing milepost.
class RoadGraph {
 public:
  RoadGraph(std::vector<DetectorNode> nodes, std::vector<Edge> edges)
      : nodes_(std::move(nodes)), edges_(std::move(edges)) {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      if (nodes_[i].lane_count < 1)
        throw std::invalid_argument("detector " + nodes_[i].detector_id + ": lane_count must be >= 1");
      if (!index_by_id_.emplace(nodes_[i].detector_id, i).second)
        throw std::invalid_argument("duplicate detector_id: " + nodes_[i].detector_id);
    }
    for (const Edge& e : edges_) {
      if (e.from >= nodes_.size() || e.to >= nodes_.size())
        throw std::invalid_argument("edge references an invalid node index");
      if (e.from == e.to)
        throw std::invalid_argument("self-edge on detector " + nodes_[e.from].detector_id);
      if (!(e.distance_miles > 0.0))
        throw std::invalid_argument("edge distance must be positive (" +
                                    nodes_[e.from].detector_id + " -> " +
                                    nodes_[e.to].detector_id + ")");
    }
  }

  // Builds the edge set from milepost order within each (corridor, direction).
  static RoadGraph from_nodes(std::vector<DetectorNode> nodes) {
    std::vector<Edge> edges = infer_edges(nodes);
    return RoadGraph(std::move(nodes), std::move(edges));
  }

  static std::vector<Edge> infer_edges(const std::vector<DetectorNode>& nodes) {
    std::map<std::pair<std::string, Direction>, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      groups[{nodes[i].corridor, nodes[i].direction}].push_back(i);
    std::vector<Edge> edges;
    for (auto& [key, idx] : groups) {
      std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
        return nodes[a].milepost_miles < nodes[b].milepost_miles;
      });
      for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
        const double d = nodes[idx[k + 1]].milepost_miles - nodes[idx[k]].milepost_miles;
        if (!(d > 0.0))
          throw std::invalid_argument("coincident mileposts on corridor " + key.first);
        edges.push_back({idx[k], idx[k + 1], d});
      }
    }
    return edges;
  }

  std::size_t node_count() const { return nodes_.size(); }
  const std::vector<DetectorNode>& nodes() const { return nodes_; }
  const DetectorNode& node(std::size_t i) const { return nodes_.at(i); }
  const std::vector<Edge>& edges() const { return edges_; }

  std::size_t index_of(const std::string& detector_id) const {
    const auto it = index_by_id_.find(detector_id);
    if (it == index_by_id_.end())
      throw std::invalid_argument("unknown detector_id: " + detector_id);
    return it->second;
  }

  bool has_detector(const std::string& detector_id) const {
    return index_by_id_.count(detector_id) > 0;
  }

  // Undirected hop distance between nodes; used to pick imputation neighbors.
  // Unreachable pairs get node_count() (farther than any real path).
  std::vector<std::vector<int>> hop_distances() const {
    const std::size_t n = nodes_.size();
    const int inf = static_cast<int>(n);
    std::vector<std::vector<int>> dist(n, std::vector<int>(n, inf));
    std::vector<std::vector<std::size_t>> adj(n);
    for (const Edge& e : edges_) {
      adj[e.from].push_back(e.to);
      adj[e.to].push_back(e.from);
    }
    for (std::size_t s = 0; s < n; ++s) {
      std::vector<std::size_t> queue{s};
      dist[s][s] = 0;
      for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        const std::size_t u = queue[qi];
        for (const std::size_t v : adj[u]) {
          if (dist[s][v] > dist[s][u] + 1) {
            dist[s][v] = dist[s][u] + 1;
            queue.push_back(v);
          }
        }
      }
    }
    return dist;
  }

 private:
  std::vector<DetectorNode> nodes_;
  std::vector<Edge> edges_;
  std::unordered_map<std::string, std::size_t> index_by_id_;
};

// Square travel-time matrix for one timestep: minutes on edges, zero on the
// diagonal and off-support.
struct DynamicAdjacency {
  std::int64_t timestep = 0;
  std::size_t n = 0;
  std::vector<double> minutes;  // row-major n*n

  double at(std::size_t i, std::size_t j) const { return minutes[i * n + j]; }
};

// Speeds below the floor are clamped before averaging; stop-and-go
// congestion would otherwise send travel time to infinity.
inline constexpr double kSpeedFloorMph = 5.0;

// Minutes to traverse d miles given the speeds at the two endpoint detectors.
inline double travel_time_minutes(double distance_miles, double speed_i_mph, double speed_j_mph) {
  if (!(distance_miles > 0.0))
    throw std::invalid_argument("travel_time: distance must be positive");
  if (speed_i_mph < 0.0 || speed_j_mph < 0.0)
    throw std::invalid_argument("travel_time: speeds must be non-negative");
  const double si = std::max(speed_i_mph, kSpeedFloorMph);
  const double sj = std::max(speed_j_mph, kSpeedFloorMph);
  return 60.0 * distance_miles / ((si + sj) / 2.0);
}

inline DynamicAdjacency build_adjacency(const RoadGraph& graph, const std::vector<double>& speeds_mph,
                                        std::int64_t timestep = 0) {
  const std::size_t n = graph.node_count();
  if (speeds_mph.size() != n)
    throw std::invalid_argument("build_adjacency: got " + std::to_string(speeds_mph.size()) +
                                " speeds for " + std::to_string(n) + " nodes");
  DynamicAdjacency a;
  a.timestep = timestep;
  a.n = n;
  a.minutes.assign(n * n, 0.0);
  for (const Edge& e : graph.edges())
    a.minutes[e.from * n + e.to] =
        travel_time_minutes(e.distance_miles, speeds_mph[e.from], speeds_mph[e.to]);
  return a;
}

enum class AdjacencyWeighting {
  ExpDecay,       // exp(-tt / tau) affinity, then row normalization
  RawTravelTime,  // raw minutes, then row normalization
};

struct NormalizeOptions {
  AdjacencyWeighting weighting = AdjacencyWeighting::ExpDecay;
  double tau_minutes = 1.0;    // decay scale for ExpDecay
  bool symmetrize = false;     // max(A, A^T) before weighting
};

// Affinity transform plus row normalization. A unit self-loop is added
// before normalizing, so isolated rows stay well defined and every row sums
// to one.
inline std::vector<double> normalize_adjacency(const DynamicAdjacency& a,
                                               const NormalizeOptions& opt) {
  if (opt.weighting == AdjacencyWeighting::ExpDecay && !(opt.tau_minutes > 0.0))
    throw std::invalid_argument("normalize_adjacency: tau must be positive");
  const std::size_t n = a.n;
  std::vector<double> tt = a.minutes;
  if (opt.symmetrize) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double m = std::max(tt[i * n + j], tt[j * n + i]);
        tt[i * n + j] = m;
        tt[j * n + i] = m;
      }
  }
  std::vector<double> w(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double m = tt[i * n + j];
      if (i == j || m == 0.0) continue;  // off-support stays zero
      w[i * n + j] = opt.weighting == AdjacencyWeighting::ExpDecay
                         ? std::exp(-m / opt.tau_minutes)
                         : m;
    }
    w[i * n + i] = 1.0;  // self-loop
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += w[i * n + j];
    for (std::size_t j = 0; j < n; ++j) w[i * n + j] /= row;
  }
  return w;
}

// --- graph definition file ------------------------------------------------

// Columns: detector_id,corridor,direction,milepost_miles,lane_count,latitude,longitude
inline std::vector<DetectorNode> read_detector_nodes_csv(const std::string& path) {
  const CsvTable t = read_csv(path);
  const int c_id = t.require_column("detector_id");
  const int c_cor = t.require_column("corridor");
  const int c_dir = t.require_column("direction");
  const int c_mp = t.require_column("milepost_miles");
  const int c_lanes = t.require_column("lane_count");
  const int c_lat = t.require_column("latitude");
  const int c_lon = t.require_column("longitude");
  std::vector<DetectorNode> nodes;
  nodes.reserve(t.rows.size());
  for (const auto& r : t.rows) {
    DetectorNode n;
    n.detector_id = r[c_id];
    n.corridor = r[c_cor];
    n.direction = parse_direction(r[c_dir]);
    n.milepost_miles = parse_double(r[c_mp]);
    n.lane_count = static_cast<int>(parse_long(r[c_lanes]));
    n.position = {parse_double(r[c_lat]), parse_double(r[c_lon])};
    nodes.push_back(std::move(n));
  }
  return nodes;
}

inline void write_detector_nodes_csv(const std::string& path,
                                     const std::vector<DetectorNode>& nodes) {
  CsvWriter w(path);
  w.row({"detector_id", "corridor", "direction", "milepost_miles", "lane_count", "latitude",
         "longitude"});
  for (const DetectorNode& n : nodes)
    w.row({n.detector_id, n.corridor, direction_str(n.direction),
           format_double(n.milepost_miles), std::to_string(n.lane_count),
           format_double(n.position.lat), format_double(n.position.lon)});
}

// Optional explicit edge list (from_id,to_id,distance_miles) overriding the
// milepost inference.
inline std::vector<Edge> read_edges_csv(const std::string& path,
                                        const std::vector<DetectorNode>& nodes) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < nodes.size(); ++i) index[nodes[i].detector_id] = i;
  const CsvTable t = read_csv(path);
  const int c_from = t.require_column("from_id");
  const int c_to = t.require_column("to_id");
  const int c_d = t.require_column("distance_miles");
  std::vector<Edge> edges;
  for (const auto& r : t.rows) {
    const auto fi = index.find(r[c_from]);
    const auto ti = index.find(r[c_to]);
    if (fi == index.end()) throw std::invalid_argument("edge csv: unknown detector " + r[c_from]);
    if (ti == index.end()) throw std::invalid_argument("edge csv: unknown detector " + r[c_to]);
    edges.push_back({fi->second, ti->second, parse_double(r[c_d])});
  }
  return edges;
}

inline RoadGraph load_graph(const std::string& nodes_csv, const std::string& edges_csv = "") {
  std::vector<DetectorNode> nodes = read_detector_nodes_csv(nodes_csv);
  if (edges_csv.empty()) return RoadGraph::from_nodes(std::move(nodes));
  std::vector<Edge> edges = read_edges_csv(edges_csv, nodes);
  return RoadGraph(std::move(nodes), std::move(edges));
}

}  // namespace evacast
