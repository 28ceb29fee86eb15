#include "milodo/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include "milodo/errors.hpp"
#include "milodo/rng.hpp"

namespace milodo {

namespace {

Topology from_edge_set(int n, std::set<std::pair<int, int>> edge_set) {
  Topology topo;
  topo.n = n;
  topo.edges.assign(edge_set.begin(), edge_set.end());
  topo.neighbors.assign(n, {});
  for (const auto& [i, j] : topo.edges) {
    topo.neighbors[i].push_back(j);
    topo.neighbors[j].push_back(i);
  }
  for (auto& nbrs : topo.neighbors) std::sort(nbrs.begin(), nbrs.end());
  return topo;
}

void add_edge(std::set<std::pair<int, int>>& edges, int i, int j) {
  if (i == j) throw ParameterError("self-loop edge");
  edges.emplace(std::min(i, j), std::max(i, j));
}

Topology sample_erdos_renyi(int n, double p, std::uint64_t seed) {
  Rng rng(seed);
  std::set<std::pair<int, int>> edges;
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (rng.uniform() < p) add_edge(edges, i, j);
  return from_edge_set(n, std::move(edges));
}

}  // namespace

TopologyKind topology_kind_from_string(const std::string& s) {
  if (s == "ring") return TopologyKind::ring;
  if (s == "grid") return TopologyKind::grid;
  if (s == "tree") return TopologyKind::tree;
  if (s == "exponential") return TopologyKind::exponential;
  if (s == "erdos_renyi") return TopologyKind::erdos_renyi;
  throw ParameterError("unknown topology kind: " + s);
}

Topology build_topology(TopologyKind kind, int n, const TopologyExtra& extra,
                        std::uint64_t seed) {
  if (n < 2) throw ParameterError("topology needs at least 2 nodes");
  std::set<std::pair<int, int>> edges;
  switch (kind) {
    case TopologyKind::ring:
      for (int i = 0; i < n; ++i) add_edge(edges, i, (i + 1) % n);
      break;
    case TopologyKind::grid: {
      if (extra.rows <= 0 || extra.cols <= 0 || extra.rows * extra.cols != n)
        throw ParameterError("grid requires rows*cols == n");
      for (int r = 0; r < extra.rows; ++r)
        for (int c = 0; c < extra.cols; ++c) {
          const int id = r * extra.cols + c;
          if (c + 1 < extra.cols) add_edge(edges, id, id + 1);
          if (r + 1 < extra.rows) add_edge(edges, id, id + extra.cols);
        }
      break;
    }
    case TopologyKind::tree:
      // Balanced binary tree in level order: parent of k is (k-1)/2.
      for (int k = 1; k < n; ++k) add_edge(edges, k, (k - 1) / 2);
      break;
    case TopologyKind::exponential:
      for (int i = 0; i < n; ++i)
        for (int p = 1; p < n; p *= 2) {
          add_edge(edges, i, (i + p) % n);
          add_edge(edges, i, ((i - p) % n + n) % n);
        }
      break;
    case TopologyKind::erdos_renyi: {
      if (!(extra.edge_prob > 0.0 && extra.edge_prob <= 1.0))
        throw ParameterError("erdos_renyi requires edge probability in (0,1]");
      // Resample with seed+1, seed+2, ... until connected.
      for (std::uint64_t s = seed;; ++s) {
        Topology candidate = sample_erdos_renyi(n, extra.edge_prob, s);
        if (validate_connected(candidate)) return candidate;
      }
    }
  }
  Topology topo = from_edge_set(n, std::move(edges));
  if (!validate_connected(topo)) throw ParameterError("constructed topology is disconnected");
  return topo;
}

bool validate_connected(const Topology& topo) {
  if (topo.n <= 0) return false;
  std::vector<char> seen(topo.n, 0);
  std::deque<int> queue{0};
  seen[0] = 1;
  int count = 1;
  while (!queue.empty()) {
    const int i = queue.front();
    queue.pop_front();
    for (int j : topo.neighbors[i])
      if (!seen[j]) {
        seen[j] = 1;
        ++count;
        queue.push_back(j);
      }
  }
  return count == topo.n;
}

GossipMatrix ring_gossip_weights(const Topology& topo) {
  for (int i = 0; i < topo.n; ++i)
    if (topo.degree(i) != 2) throw ShapeError("ring_gossip_weights requires all degrees = 2");
  GossipMatrix g;
  g.w = Eigen::MatrixXd::Zero(topo.n, topo.n);
  for (int i = 0; i < topo.n; ++i) {
    g.w(i, i) = 1.0 / 3.0;
    for (int j : topo.neighbors[i]) g.w(i, j) = 1.0 / 3.0;
  }
  return g;
}

GossipMatrix metropolis_weights(const Topology& topo) {
  GossipMatrix g;
  g.w = Eigen::MatrixXd::Zero(topo.n, topo.n);
  for (int i = 0; i < topo.n; ++i) {
    double off_sum = 0.0;
    for (int j : topo.neighbors[i]) {
      const double wij = 1.0 / (1.0 + std::max(topo.degree(i), topo.degree(j)));
      g.w(i, j) = wij;
      off_sum += wij;
    }
    g.w(i, i) = 1.0 - off_sum;
  }
  return g;
}

void save_topology(const Topology& topo, std::ostream& out) {
  out << "n=" << topo.n << "\n";
  for (const auto& [i, j] : topo.edges) out << i << " " << j << "\n";
}

Topology load_topology(std::istream& in) {
  std::string header;
  if (!(in >> header) || header.rfind("n=", 0) != 0)
    throw ParameterError("topology file: missing n=<count> header");
  const int n = std::stoi(header.substr(2));
  std::set<std::pair<int, int>> edges;
  int i, j;
  while (in >> i >> j) {
    if (i < 0 || j < 0 || i >= n || j >= n) throw ParameterError("topology file: node id out of range");
    add_edge(edges, i, j);
  }
  Topology topo = from_edge_set(n, std::move(edges));
  if (!validate_connected(topo)) throw ParameterError("topology file: graph is disconnected");
  return topo;
}

void save_topology_file(const Topology& topo, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ParameterError("cannot open for write: " + path);
  save_topology(topo, out);
}

Topology load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParameterError("cannot open for read: " + path);
  return load_topology(in);
}

}  // namespace milodo
