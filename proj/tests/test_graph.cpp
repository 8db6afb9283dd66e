#include "evacast/graph.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "evacast/rng.hpp"

using namespace evacast;

namespace {

DetectorNode det(const std::string& id, const std::string& corridor, Direction dir, double mp,
                 int lanes = 2, LatLon pos = {}) {
  return DetectorNode{id, corridor, dir, mp, lanes, pos};
}

// A-B-C chain, 2 miles apart, on one eastbound corridor.
RoadGraph three_node_chain() {
  return RoadGraph::from_nodes({det("A", "I-4", Direction::East, 0.0),
                                det("B", "I-4", Direction::East, 2.0),
                                det("C", "I-4", Direction::East, 4.0)});
}

}  // namespace

TEST(TravelTime, HandComputedTenMiles) {
  EXPECT_DOUBLE_EQ(travel_time_minutes(10, 60, 60), 10.0);
}

TEST(TravelTime, HandComputedMixedSpeeds) {
  // 5 miles at mean 40 mph = 0.125 h = 7.5 min.
  EXPECT_DOUBLE_EQ(travel_time_minutes(5, 30, 50), 7.5);
}

TEST(TravelTime, SymmetricInSpeeds) {
  Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const double d = rng.uniform(0.5, 20);
    const double a = rng.uniform(0, 80);
    const double b = rng.uniform(0, 80);
    EXPECT_DOUBLE_EQ(travel_time_minutes(d, a, b), travel_time_minutes(d, b, a));
  }
}

TEST(TravelTime, HomogeneousInDistance) {
  Rng rng(3);
  for (int i = 0; i < 50; ++i) {
    const double d = rng.uniform(0.5, 10);
    const double k = rng.uniform(0.1, 5);
    const double a = rng.uniform(5, 80);
    const double b = rng.uniform(5, 80);
    EXPECT_NEAR(travel_time_minutes(k * d, a, b), k * travel_time_minutes(d, a, b), 1e-12);
  }
}

TEST(TravelTime, SpeedsBelowFloorAreClamped) {
  // Both speeds at zero clamp to the floor instead of dividing by zero.
  EXPECT_DOUBLE_EQ(travel_time_minutes(1, 0, 0), 60.0 / kSpeedFloorMph);
  EXPECT_DOUBLE_EQ(travel_time_minutes(1, 0, 0), travel_time_minutes(1, kSpeedFloorMph, 0));
}

TEST(TravelTime, NegativeInputsThrow) {
  EXPECT_THROW(travel_time_minutes(-1, 60, 60), std::invalid_argument);
  EXPECT_THROW(travel_time_minutes(1, -5, 60), std::invalid_argument);
}

TEST(RoadGraph, ChainEdgesFollowMilepostOrder) {
  RoadGraph g = three_node_chain();
  ASSERT_EQ(g.edges().size(), 2u);
  EXPECT_EQ(g.edges()[0].from, g.index_of("A"));
  EXPECT_EQ(g.edges()[0].to, g.index_of("B"));
  EXPECT_DOUBLE_EQ(g.edges()[0].distance_miles, 2.0);
}

TEST(RoadGraph, SeparateCorridorsDoNotConnect) {
  RoadGraph g = RoadGraph::from_nodes({det("A", "I-4", Direction::East, 0.0),
                                       det("B", "I-4", Direction::East, 2.0),
                                       det("X", "I-75", Direction::North, 0.0),
                                       det("Y", "I-75", Direction::North, 3.0)});
  EXPECT_EQ(g.edges().size(), 2u);
  for (const Edge& e : g.edges())
    EXPECT_EQ(g.node(e.from).corridor, g.node(e.to).corridor);
}

TEST(RoadGraph, DuplicateDetectorIdThrows) {
  EXPECT_THROW(RoadGraph::from_nodes(
                   {det("A", "I-4", Direction::East, 0.0), det("A", "I-4", Direction::East, 1.0)}),
               std::invalid_argument);
}

TEST(BuildAdjacency, DiagonalIsZero) {
  RoadGraph g = three_node_chain();
  DynamicAdjacency a = build_adjacency(g, {60, 60, 60});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(a.at(i, i), 0.0);
}

TEST(BuildAdjacency, HandComputedChain) {
  RoadGraph g = three_node_chain();
  DynamicAdjacency a = build_adjacency(g, {60, 60, 60});
  const std::size_t ia = g.index_of("A"), ib = g.index_of("B"), ic = g.index_of("C");
  EXPECT_DOUBLE_EQ(a.at(ia, ib), 2.0);
  EXPECT_DOUBLE_EQ(a.at(ib, ic), 2.0);
  EXPECT_DOUBLE_EQ(a.at(ia, ic), 0.0);  // not adjacent
}

TEST(BuildAdjacency, HalvingSpeedsDoublesEntry) {
  RoadGraph g = three_node_chain();
  DynamicAdjacency fast = build_adjacency(g, {60, 60, 60});
  DynamicAdjacency slow = build_adjacency(g, {30, 30, 30});
  const std::size_t ia = g.index_of("A"), ib = g.index_of("B");
  EXPECT_DOUBLE_EQ(slow.at(ia, ib), 2.0 * fast.at(ia, ib));
}

TEST(BuildAdjacency, ZeroOffSupportForRandomSpeeds) {
  RoadGraph g = three_node_chain();
  Rng rng(4);
  std::vector<bool> edge_mask(9, false);
  for (const Edge& e : g.edges()) edge_mask[e.from * 3 + e.to] = true;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> speeds{rng.uniform(0, 80), rng.uniform(0, 80), rng.uniform(0, 80)};
    DynamicAdjacency a = build_adjacency(g, speeds);
    for (std::size_t i = 0; i < 3; ++i)
      for (std::size_t j = 0; j < 3; ++j) {
        if (edge_mask[i * 3 + j])
          EXPECT_GT(a.at(i, j), 0.0);
        else
          EXPECT_DOUBLE_EQ(a.at(i, j), 0.0);
      }
  }
}

TEST(BuildAdjacency, SpeedCountMismatchThrows) {
  RoadGraph g = three_node_chain();
  EXPECT_THROW(build_adjacency(g, {60, 60}), std::invalid_argument);
}

TEST(NormalizeAdjacency, RowsSumToOne) {
  RoadGraph g = three_node_chain();
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    DynamicAdjacency a =
        build_adjacency(g, {rng.uniform(5, 80), rng.uniform(5, 80), rng.uniform(5, 80)});
    for (const AdjacencyWeighting mode :
         {AdjacencyWeighting::ExpDecay, AdjacencyWeighting::RawTravelTime}) {
      const std::vector<double> w = normalize_adjacency(a, {mode, 2.0, false});
      for (std::size_t i = 0; i < 3; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
          row += w[i * 3 + j];
          EXPECT_GE(w[i * 3 + j], 0.0);
          EXPECT_LE(w[i * 3 + j], 1.0);
        }
        EXPECT_NEAR(row, 1.0, 1e-12);
      }
    }
  }
}

TEST(NormalizeAdjacency, IsolatedNodeKeepsOnlySelfLoop) {
  RoadGraph g = RoadGraph::from_nodes({det("A", "I-4", Direction::East, 0.0),
                                       det("B", "I-4", Direction::East, 2.0),
                                       det("X", "US-1", Direction::North, 0.0)});
  DynamicAdjacency a = build_adjacency(g, {60, 60, 60});
  const std::vector<double> w = normalize_adjacency(a, {AdjacencyWeighting::ExpDecay, 2.0, false});
  const std::size_t ix = g.index_of("X");
  for (std::size_t j = 0; j < 3; ++j)
    EXPECT_DOUBLE_EQ(w[ix * 3 + j], j == ix ? 1.0 : 0.0);
}

TEST(NormalizeAdjacency, LargerTravelTimeGetsSmallerWeight) {
  const double tau = 3.0;
  DynamicAdjacency a;
  a.n = 3;
  a.minutes = {0, 2, 0, 0, 0, 6, 0, 0, 0};
  const std::vector<double> w = normalize_adjacency(a, {AdjacencyWeighting::ExpDecay, tau, false});
  // Pre-normalization weights are exp(-2/3) and exp(-6/3); compare through
  // the per-row ratio against the unit self-loop.
  const double w01 = w[0 * 3 + 1] / w[0 * 3 + 0];
  const double w12 = w[1 * 3 + 2] / w[1 * 3 + 1];
  EXPECT_NEAR(w01, std::exp(-2.0 / tau), 1e-12);
  EXPECT_NEAR(w12, std::exp(-6.0 / tau), 1e-12);
  EXPECT_GT(w01, w12);
}

TEST(NormalizeAdjacency, SymmetrizeTakesElementwiseMax) {
  DynamicAdjacency a;
  a.n = 2;
  a.minutes = {0, 4, 0, 0};
  const std::vector<double> w =
      normalize_adjacency(a, {AdjacencyWeighting::RawTravelTime, 1.0, true});
  EXPECT_DOUBLE_EQ(w[0 * 2 + 1], 4.0 / 5.0);
  EXPECT_DOUBLE_EQ(w[1 * 2 + 0], 4.0 / 5.0);
}

TEST(Adjacency, PermutationEquivariance) {
  // Relabeling nodes and permuting speeds permutes the adjacency the same way.
  std::vector<DetectorNode> nodes{det("A", "I-4", Direction::East, 0.0),
                                  det("B", "I-4", Direction::East, 2.0),
                                  det("C", "I-4", Direction::East, 5.0),
                                  det("D", "I-95", Direction::North, 1.0),
                                  det("E", "I-95", Direction::North, 2.5)};
  RoadGraph g = RoadGraph::from_nodes(nodes);
  Rng rng(6);
  std::vector<double> speeds(5);
  for (auto& s : speeds) s = rng.uniform(10, 70);

  const std::vector<std::size_t> perm{3, 0, 4, 1, 2};  // new_index -> old_index
  std::vector<DetectorNode> pnodes(5);
  std::vector<double> pspeeds(5);
  for (std::size_t i = 0; i < 5; ++i) {
    pnodes[i] = nodes[perm[i]];
    pspeeds[i] = speeds[perm[i]];
  }
  RoadGraph pg = RoadGraph::from_nodes(pnodes);

  DynamicAdjacency a = build_adjacency(g, speeds);
  DynamicAdjacency pa = build_adjacency(pg, pspeeds);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j)
      EXPECT_DOUBLE_EQ(pa.at(i, j), a.at(perm[i], perm[j]));
}

TEST(GraphCsv, RoundTripAndEdgeOverride) {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "evacast_graph_test";
  fs::create_directories(dir);
  const std::string nodes_path = (dir / "nodes.csv").string();
  const std::string edges_path = (dir / "edges.csv").string();

  write_detector_nodes_csv(nodes_path, {det("A", "I-4", Direction::East, 0.0, 3, {28.1, -81.5}),
                                        det("B", "I-4", Direction::East, 2.0, 3, {28.1, -81.4})});
  RoadGraph g = load_graph(nodes_path);
  EXPECT_EQ(g.node_count(), 2u);
  EXPECT_EQ(g.edges().size(), 1u);
  EXPECT_EQ(g.node(g.index_of("A")).lane_count, 3);
  EXPECT_DOUBLE_EQ(g.node(g.index_of("B")).position.lon, -81.4);

  // Explicit edge file overrides inference, including the distance.
  {
    std::ofstream e(edges_path);
    e << "from_id,to_id,distance_miles\nB,A,7.5\n";
  }
  RoadGraph g2 = load_graph(nodes_path, edges_path);
  ASSERT_EQ(g2.edges().size(), 1u);
  EXPECT_EQ(g2.edges()[0].from, g2.index_of("B"));
  EXPECT_DOUBLE_EQ(g2.edges()[0].distance_miles, 7.5);
  fs::remove_all(dir);
}
