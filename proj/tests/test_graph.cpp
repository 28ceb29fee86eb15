#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "milodo/errors.hpp"
#include "milodo/graph.hpp"

using namespace milodo;

namespace {

// Direct construction, bypassing the loader's connectivity check.
Topology from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
  Topology topo;
  topo.n = n;
  topo.edges = edges;
  topo.neighbors.assign(n, {});
  for (const auto& [i, j] : edges) {
    topo.neighbors[i].push_back(j);
    topo.neighbors[j].push_back(i);
  }
  for (auto& nbrs : topo.neighbors) std::sort(nbrs.begin(), nbrs.end());
  return topo;
}

void check_gossip_invariants(const GossipMatrix& g, const Topology& topo) {
  const int n = topo.n;
  REQUIRE(g.w.rows() == n);
  REQUIRE(g.w.cols() == n);
  for (int i = 0; i < n; ++i) {
    CHECK(g.w.row(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(g.w.col(i).sum() == doctest::Approx(1.0).epsilon(1e-12));
    for (int j = 0; j < n; ++j) {
      CHECK(g.w(i, j) >= 0.0);
      CHECK(g.w(i, j) == g.w(j, i));
      if (i != j && g.w(i, j) != 0.0) {
        const auto& nbrs = topo.neighbors[i];
        CHECK(std::find(nbrs.begin(), nbrs.end(), j) != nbrs.end());
      }
    }
  }
}

}  // namespace

TEST_CASE("ring topology") {
  const Topology t = build_topology(TopologyKind::ring, 10);
  CHECK(t.edges.size() == 10);
  for (int i = 0; i < 10; ++i) CHECK(t.degree(i) == 2);
  CHECK(validate_connected(t));
}

TEST_CASE("grid topology 3x3") {
  TopologyExtra ex;
  ex.rows = 3;
  ex.cols = 3;
  const Topology t = build_topology(TopologyKind::grid, 9, ex);
  CHECK(t.edges.size() == 12);
  CHECK(t.degree(0) == 2);  // corner
  CHECK(t.degree(8) == 2);  // corner
  CHECK(t.degree(4) == 4);  // center
  CHECK(validate_connected(t));
}

TEST_CASE("grid dimension mismatch rejected") {
  TopologyExtra ex;
  ex.rows = 2;
  ex.cols = 3;
  CHECK_THROWS_AS(build_topology(TopologyKind::grid, 9, ex), ParameterError);
}

TEST_CASE("node count below two rejected") {
  CHECK_THROWS_AS(build_topology(TopologyKind::ring, 1), ParameterError);
}

TEST_CASE("tree topology is the balanced binary tree") {
  const Topology t = build_topology(TopologyKind::tree, 7);
  const std::vector<std::pair<int, int>> expected = {{0, 1}, {0, 2}, {1, 3},
                                                     {1, 4}, {2, 5}, {2, 6}};
  CHECK(t.edges == expected);
  CHECK(validate_connected(t));
}

TEST_CASE("exponential topology connects powers of two") {
  const Topology t = build_topology(TopologyKind::exponential, 8);
  // i +- 1, 2, 4 mod 8; the +-4 hop coincides, so degree 5 everywhere.
  CHECK(t.edges.size() == 20);
  for (int i = 0; i < 8; ++i) CHECK(t.degree(i) == 5);
  CHECK(validate_connected(t));
}

TEST_CASE("erdos-renyi seeded fixture") {
  TopologyExtra ex;
  ex.edge_prob = 0.3;
  const Topology t = build_topology(TopologyKind::erdos_renyi, 10, ex, 7);
  const std::vector<std::pair<int, int>> pinned = {
      {0, 5}, {0, 6}, {0, 8}, {1, 2}, {1, 6}, {2, 9}, {3, 4},
      {3, 6}, {3, 7}, {4, 7}, {5, 6}, {5, 8}, {5, 9}, {7, 8}};
  CHECK(t.edges == pinned);
  CHECK(validate_connected(t));
}

TEST_CASE("erdos-renyi invalid probability rejected") {
  TopologyExtra ex;
  ex.edge_prob = 0.0;
  CHECK_THROWS_AS(build_topology(TopologyKind::erdos_renyi, 10, ex, 1), ParameterError);
  ex.edge_prob = 1.5;
  CHECK_THROWS_AS(build_topology(TopologyKind::erdos_renyi, 10, ex, 1), ParameterError);
}

TEST_CASE("constructed topologies satisfy structural invariants") {
  TopologyExtra grid_ex;
  grid_ex.rows = 3;
  grid_ex.cols = 4;
  TopologyExtra er_ex;
  er_ex.edge_prob = 0.4;
  const Topology topos[] = {
      build_topology(TopologyKind::ring, 6),
      build_topology(TopologyKind::grid, 12, grid_ex),
      build_topology(TopologyKind::tree, 10),
      build_topology(TopologyKind::exponential, 9),
      build_topology(TopologyKind::erdos_renyi, 8, er_ex, 3),
  };
  for (const Topology& t : topos) {
    CHECK(validate_connected(t));
    for (const auto& [i, j] : t.edges) {
      CHECK(i < j);
      CHECK(i != j);
    }
    for (int i = 0; i < t.n; ++i)
      for (int j : t.neighbors[i]) {
        const auto& back = t.neighbors[j];
        CHECK(std::find(back.begin(), back.end(), i) != back.end());
      }
  }
}

TEST_CASE("ring gossip weights") {
  const Topology t = build_topology(TopologyKind::ring, 10);
  const GossipMatrix g = ring_gossip_weights(t);
  check_gossip_invariants(g, t);
  for (int i = 0; i < 10; ++i) {
    int nonzero = 0;
    for (int j = 0; j < 10; ++j)
      if (g.w(i, j) != 0.0) {
        ++nonzero;
        CHECK(g.w(i, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
      }
    CHECK(nonzero == 3);
  }
}

TEST_CASE("ring gossip on n=3 triangle") {
  const Topology t = build_topology(TopologyKind::ring, 3);
  const GossipMatrix g = ring_gossip_weights(t);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(g.w(i, j) == doctest::Approx(1.0 / 3.0));
}

TEST_CASE("ring gossip sparsity on n=4") {
  const Topology t = build_topology(TopologyKind::ring, 4);
  const GossipMatrix g = ring_gossip_weights(t);
  CHECK(g.w(1, 3) == 0.0);
  CHECK(g.w(0, 2) == 0.0);
}

TEST_CASE("ring gossip rejects non-ring topology") {
  const Topology star = from_edges(4, {{0, 1}, {0, 2}, {0, 3}});
  CHECK_THROWS_AS(ring_gossip_weights(star), ShapeError);
}

TEST_CASE("metropolis weights on a star") {
  const Topology star = from_edges(4, {{0, 1}, {0, 2}, {0, 3}});
  const GossipMatrix g = metropolis_weights(star);
  check_gossip_invariants(g, star);
  for (int j = 1; j < 4; ++j) {
    CHECK(g.w(0, j) == doctest::Approx(0.25));
    CHECK(g.w(j, j) == doctest::Approx(0.75));
  }
  CHECK(g.w(0, 0) == doctest::Approx(0.25));
}

TEST_CASE("metropolis equals ring weights on a ring") {
  const Topology t = build_topology(TopologyKind::ring, 10);
  const GossipMatrix a = metropolis_weights(t);
  const GossipMatrix b = ring_gossip_weights(t);
  CHECK((a.w - b.w).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("metropolis invariants on assorted topologies") {
  TopologyExtra er_ex;
  er_ex.edge_prob = 0.35;
  const Topology topos[] = {
      build_topology(TopologyKind::tree, 7),
      build_topology(TopologyKind::exponential, 8),
      build_topology(TopologyKind::erdos_renyi, 10, er_ex, 7),
  };
  for (const Topology& t : topos) check_gossip_invariants(metropolis_weights(t), t);
}

TEST_CASE("validate_connected") {
  CHECK(validate_connected(build_topology(TopologyKind::ring, 5)));
  const Topology triangles =
      from_edges(6, {{0, 1}, {0, 2}, {1, 2}, {3, 4}, {3, 5}, {4, 5}});
  CHECK_FALSE(validate_connected(triangles));
  const Topology isolated = from_edges(3, {{0, 1}});
  CHECK_FALSE(validate_connected(isolated));
}

TEST_CASE("topology text round trip") {
  TopologyExtra ex;
  ex.edge_prob = 0.4;
  const Topology t = build_topology(TopologyKind::erdos_renyi, 9, ex, 11);
  std::stringstream ss;
  save_topology(t, ss);
  const Topology back = load_topology(ss);
  CHECK(back.n == t.n);
  CHECK(back.edges == t.edges);
  CHECK(back.neighbors == t.neighbors);
}
