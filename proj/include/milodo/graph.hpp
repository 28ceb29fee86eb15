#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace milodo {

// Undirected connected communication graph on nodes 0..n-1. Edge list is kept
// sorted with i < j per pair so iteration order is deterministic.
struct Topology {
  int n = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<int>> neighbors;  // ascending per node

  int degree(int i) const { return static_cast<int>(neighbors[i].size()); }
};

enum class TopologyKind { ring, grid, tree, exponential, erdos_renyi };

struct TopologyExtra {
  int rows = 0;            // grid
  int cols = 0;            // grid
  double edge_prob = 0.0;  // erdos_renyi
};

TopologyKind topology_kind_from_string(const std::string& s);

Topology build_topology(TopologyKind kind, int n, const TopologyExtra& extra = {},
                        std::uint64_t seed = 0);

// True iff BFS from node 0 reaches all nodes.
bool validate_connected(const Topology& topo);

// Symmetric doubly stochastic mixing weights supported on the topology edges
// plus the diagonal.
struct GossipMatrix {
  Eigen::MatrixXd w;
};

// The fixed 1/3 rule; requires every node to have degree 2.
GossipMatrix ring_gossip_weights(const Topology& topo);

// Metropolis-Hastings weights, valid on any connected topology.
GossipMatrix metropolis_weights(const Topology& topo);

// Plain-text edge list: header "n=<count>", then one "i j" pair per line.
void save_topology(const Topology& topo, std::ostream& out);
Topology load_topology(std::istream& in);
void save_topology_file(const Topology& topo, const std::string& path);
Topology load_topology_file(const std::string& path);

}  // namespace milodo
