#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "milodo/baselines.hpp"
#include "milodo/errors.hpp"
#include "milodo/graph.hpp"
#include "milodo/milodo.hpp"
#include "milodo/neuro.hpp"
#include "milodo/problems.hpp"

using namespace milodo;

namespace {

Topology single_node_topology() {
  Topology topo;
  topo.n = 1;
  topo.neighbors = {{}};
  return topo;
}

Eigen::VectorXd dual_sum(const SimState& state) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(state.nodes[0].y.size());
  for (const NodeState& node : state.nodes) sum += node.y;
  return sum;
}

bool node_states_equal(const NodeState& a, const NodeState& b) {
  return (a.x - b.x).lpNorm<Eigen::Infinity>() == 0.0 &&
         (a.y - b.y).lpNorm<Eigen::Infinity>() == 0.0 &&
         (a.z - b.z).lpNorm<Eigen::Infinity>() == 0.0 &&
         (a.hidden.m.h - b.hidden.m.h).lpNorm<Eigen::Infinity>() == 0.0 &&
         (a.hidden.s.h - b.hidden.s.h).lpNorm<Eigen::Infinity>() == 0.0 &&
         (a.hidden.u.c - b.hidden.u.c).lpNorm<Eigen::Infinity>() == 0.0;
}

}  // namespace

TEST_CASE("init_rollout_state starts at zero with seeded hidden banks") {
  const Topology topo = build_topology(TopologyKind::ring, 4);
  const SimState a = init_rollout_state(topo, 5, 3);
  const SimState b = init_rollout_state(topo, 5, 3);
  const SimState c = init_rollout_state(topo, 5, 4);
  REQUIRE(a.nodes.size() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(a.nodes[i].x.norm() == 0.0);
    CHECK(a.nodes[i].y.norm() == 0.0);
    CHECK(a.nodes[i].z.norm() == 0.0);
    CHECK(node_states_equal(a.nodes[i], b.nodes[i]));
  }
  CHECK((a.nodes[0].hidden.m.h - c.nodes[0].hidden.m.h).lpNorm<Eigen::Infinity>() > 0.0);
  // Per-node streams differ.
  CHECK((a.nodes[0].hidden.m.h - a.nodes[1].hidden.m.h).lpNorm<Eigen::Infinity>() > 0.0);
}

TEST_CASE("isolated node at the optimum is a fixed point") {
  const Topology topo = single_node_topology();
  const Optimizee opt = gen_lasso({1, 4, 8, 0.0}, 2);
  const SolutionOracle oracle = centralized_solve(opt);
  const MiLoDoParams params = init_random(topo, 6);

  SimState state = init_rollout_state(topo, 4, 1);
  state.nodes[0].x = oracle.x_star;
  state.nodes[0].z = oracle.x_star;
  milodo_iteration(state, params, opt, topo);
  CHECK((state.nodes[0].x - oracle.x_star).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK(state.nodes[0].y.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("fixed_point_residual") {
  const Topology topo = build_topology(TopologyKind::ring, 4);
  const GossipMatrix gossip = ring_gossip_weights(topo);
  const Optimizee opt = gen_lasso({4, 10, 5, 0.1}, 7);
  const SolutionOracle oracle = centralized_solve(opt);
  const MiLoDoParams params = init_special(topo, gossip, 0.03, 7);

  CHECK(fixed_point_residual(opt, topo, params, oracle) < 1e-8);

  SolutionOracle shifted = oracle;
  shifted.x_star.array() += 0.05;
  shifted.objective_star = global_objective(opt, shifted.x_star);
  shifted.residual = 0.0;
  CHECK(fixed_point_residual(opt, topo, params, shifted) > 1e-4);

  SolutionOracle loose = oracle;
  loose.residual = 1e-3;
  CHECK_THROWS_AS(fixed_point_residual(opt, topo, params, loose), ParameterError);
}

TEST_CASE("special init reproduces the Exact-Diffusion trajectory") {
  const Topology topo = build_topology(TopologyKind::ring, 4);
  const GossipMatrix gossip = ring_gossip_weights(topo);
  ProblemShape shape{4, 10, 5, 0.0};
  const Optimizee opt = gen_lasso(shape, 7);
  const double gamma = 0.03;
  const MiLoDoParams params = init_special(topo, gossip, gamma, 3);

  SimState state = init_rollout_state(topo, shape.d, 0);
  BaselineConfig cfg;
  cfg.alg = BaselineAlg::prox_ed;
  cfg.gossip = gossip;
  cfg.gamma = gamma;
  BaselineState ref = init_baseline_state(cfg.alg, shape.n, shape.d);

  for (int k = 0; k < 20; ++k) {
    milodo_iteration(state, params, opt, topo);
    prox_ed_step(ref, opt, cfg, topo);
    for (int i = 0; i < shape.n; ++i)
      CHECK((state.nodes[i].x - ref.x.row(i).transpose()).lpNorm<Eigen::Infinity>() < 1e-9);
  }
}

TEST_CASE("dual variables are conserved along a bounded trajectory") {
  const Topology topo = build_topology(TopologyKind::ring, 4);
  const Optimizee opt = gen_lasso({4, 10, 5, 0.1}, 7);
  const MiLoDoParams params = init_random(topo, 5);
  SimState state = init_rollout_state(topo, 10, 5);
  const Eigen::VectorXd sum0 = dual_sum(state);
  double worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    milodo_iteration(state, params, opt, topo);
    worst = std::max(worst, (dual_sum(state) - sum0).lpNorm<Eigen::Infinity>());
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("skipping the edge symmetrization breaks dual conservation") {
  const Topology topo = build_topology(TopologyKind::ring, 4);
  const Optimizee opt = gen_lasso({4, 10, 5, 0.1}, 7);
  const MiLoDoParams params = init_random(topo, 5);
  SimState state = init_rollout_state(topo, 10, 5);
  const Eigen::VectorXd sum0 = dual_sum(state);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    milodo_iteration(state, params, opt, topo, nullptr, false);
    worst = std::max(worst, (dual_sum(state) - sum0).lpNorm<Eigen::Infinity>());
  }
  CHECK(worst > 1e-6);
}

TEST_CASE("one iteration only touches the two-hop neighborhood") {
  // On a 6-ring, node 3 is three hops from node 0, outside its influence
  // cone for a single synchronous round.
  const Topology topo = build_topology(TopologyKind::ring, 6);
  const Optimizee opt = gen_lasso({6, 5, 4, 0.1}, 11);
  const MiLoDoParams params = init_random(topo, 12);

  SimState base = init_rollout_state(topo, 5, 13);
  SimState mutated = base;
  mutated.nodes[3].x.array() += 0.7;
  mutated.nodes[3].y.array() -= 0.2;

  milodo_iteration(base, params, opt, topo);
  milodo_iteration(mutated, params, opt, topo);

  CHECK(node_states_equal(base.nodes[0], mutated.nodes[0]));
  // The mutation does reach the mutated node's neighbors.
  CHECK_FALSE(node_states_equal(base.nodes[2], mutated.nodes[2]));
  CHECK_FALSE(node_states_equal(base.nodes[3], mutated.nodes[3]));
}

TEST_CASE("divergence raises an error tagged with iteration and node") {
  const Topology topo = build_topology(TopologyKind::ring, 4);
  const Optimizee opt = gen_lasso({4, 6, 5, 0.1}, 3);
  MiLoDoParams params = init_random(topo, 3);
  for (NodeParams& node : params.nodes) {
    node.phi_m.mlp_w2.setZero();
    node.phi_m.mlp_b2.setConstant(1e200);
  }
  bool caught = false;
  try {
    rollout(opt, topo, params, 50, 0);
  } catch (const DivergenceError& e) {
    caught = true;
    CHECK(e.iteration >= 0);
    CHECK(e.iteration < 50);
    CHECK(e.node >= 0);
    CHECK(e.node < 4);
  }
  CHECK(caught);
}

TEST_CASE("rollout argument validation and record stream") {
  const Topology topo = build_topology(TopologyKind::ring, 4);
  const Optimizee opt = gen_lasso({4, 6, 5, 0.1}, 3);
  const SolutionOracle oracle = centralized_solve(opt);
  const GossipMatrix gossip = ring_gossip_weights(topo);
  const MiLoDoParams params = init_special(topo, gossip, 0.03);

  CHECK_THROWS_AS(rollout(opt, topo, params, 0, 0), ParameterError);

  const RolloutResult one = rollout(opt, topo, params, 1, 0, true, &oracle);
  REQUIRE(one.records.size() == 1);
  CHECK(one.records[0].iter == 1);
  CHECK(std::isfinite(one.records[0].loss));
  CHECK(one.records[0].gap >= 0.0);
  CHECK(one.records[0].consensus >= 0.0);

  const RolloutResult ten = rollout(opt, topo, params, 10, 0, true, &oracle);
  REQUIRE(ten.records.size() == 10);
  // Without an oracle the gap field stays at its sentinel.
  const RolloutResult plain = rollout(opt, topo, params, 3, 0);
  CHECK(plain.records[0].gap < 0.0);
  // Metrics off skips the records entirely but produces the same state.
  const RolloutResult quiet = rollout(opt, topo, params, 10, 0, false);
  CHECK(quiet.records.empty());
  for (int i = 0; i < 4; ++i)
    CHECK((quiet.state.nodes[i].x - ten.state.nodes[i].x).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("rollout is deterministic") {
  const Topology topo = build_topology(TopologyKind::ring, 4);
  const Optimizee opt = gen_lasso({4, 6, 5, 0.1}, 3);
  const MiLoDoParams params = init_random(topo, 21);
  const RolloutResult a = rollout(opt, topo, params, 25, 9);
  const RolloutResult b = rollout(opt, topo, params, 25, 9);
  for (int i = 0; i < 4; ++i) CHECK(node_states_equal(a.state.nodes[i], b.state.nodes[i]));
}

TEST_CASE("mean_x averages the primal iterates") {
  SimState state;
  state.nodes.resize(2);
  state.nodes[0].x = Eigen::Vector2d(1.0, 3.0);
  state.nodes[1].x = Eigen::Vector2d(3.0, 5.0);
  const Eigen::VectorXd mean = mean_x(state);
  CHECK(mean(0) == 2.0);
  CHECK(mean(1) == 4.0);
}
