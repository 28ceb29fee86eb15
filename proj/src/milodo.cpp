#include "milodo/milodo.hpp"

#include <cmath>

#include "milodo/errors.hpp"
#include "milodo/rng.hpp"

namespace milodo {

namespace {

constexpr int H = kLstmHidden;

LstmBank random_bank(int d, Rng& rng) {
  LstmBank bank;
  bank.h.resize(H, d);
  bank.c.resize(H, d);
  for (int col = 0; col < d; ++col)
    for (int row = 0; row < H; ++row) bank.h(row, col) = rng.normal();
  for (int col = 0; col < d; ++col)
    for (int row = 0; row < H; ++row) bank.c(row, col) = rng.normal();
  return bank;
}

// Soft threshold tolerating zero weights (relu step sizes can be exactly 0).
Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, const Eigen::VectorXd& p,
                               double lambda) {
  Eigen::VectorXd out(v.size());
  for (int l = 0; l < v.size(); ++l) {
    const double shrink = std::abs(v(l)) - lambda * p(l);
    out(l) = shrink > 0.0 ? std::copysign(shrink, v(l)) : 0.0;
  }
  return out;
}

// Slot of node i in j's ascending neighbor list.
int slot_of(const Topology& topo, int j, int i) {
  const auto& nbrs = topo.neighbors[j];
  const auto it = std::lower_bound(nbrs.begin(), nbrs.end(), i);
  if (it == nbrs.end() || *it != i) throw ShapeError("slot_of: not a neighbor");
  return static_cast<int>(it - nbrs.begin());
}

void check_finite(const SimState& state, int iteration) {
  for (int i = 0; i < static_cast<int>(state.nodes.size()); ++i) {
    const NodeState& node = state.nodes[i];
    if (!node.x.allFinite() || !node.y.allFinite() || !node.z.allFinite() ||
        !node.hidden.m.h.allFinite() || !node.hidden.s.h.allFinite() ||
        !node.hidden.u.h.allFinite())
      throw DivergenceError(iteration, i,
                            "non-finite state at iteration " + std::to_string(iteration) +
                                ", node " + std::to_string(i));
  }
}

}  // namespace

SimState init_rollout_state(const Topology& topo, int d, std::uint64_t seed) {
  SimState state;
  state.nodes.resize(topo.n);
  for (int i = 0; i < topo.n; ++i) {
    NodeState& node = state.nodes[i];
    node.x = Eigen::VectorXd::Zero(d);
    node.y = Eigen::VectorXd::Zero(d);
    node.z = Eigen::VectorXd::Zero(d);
    // Independent stream per (node, module).
    Rng rng_m(seed ^ (0x9E3779B97F4A7C15ULL * (3ULL * i + 1)));
    Rng rng_s(seed ^ (0x9E3779B97F4A7C15ULL * (3ULL * i + 2)));
    Rng rng_u(seed ^ (0x9E3779B97F4A7C15ULL * (3ULL * i + 3)));
    node.hidden.m = random_bank(d, rng_m);
    node.hidden.s = random_bank(d, rng_s);
    node.hidden.u = random_bank(d, rng_u);
  }
  return state;
}

void milodo_iteration(SimState& state, const MiLoDoParams& params, const Optimizee& opt,
                      const Topology& topo, IterationTape* tape, bool symmetrize_duals) {
  const int n = topo.n;
  const int d = opt.shape.d;
  const double lambda = opt.shape.lambda;
  if (static_cast<int>(state.nodes.size()) != n || static_cast<int>(params.nodes.size()) != n)
    throw ShapeError("milodo_iteration: state/params do not match topology");
  if (tape != nullptr) tape->nodes.resize(n);

  // Local step: p_i from phi_M, then the weighted prox.
  std::vector<Eigen::VectorXd> new_z(n);
  for (int i = 0; i < n; ++i) {
    NodeState& node = state.nodes[i];
    NodeIterTape* nt = tape != nullptr ? &tape->nodes[i] : nullptr;
    Eigen::VectorXd grad = local_gradient(opt, i, node.x);
    if (nt != nullptr && opt.kind == ProblemKind::logistic) {
      Eigen::VectorXd s = opt.shard_a[i] * node.x;
      for (int r = 0; r < s.size(); ++r) s(r) = 1.0 / (1.0 + std::exp(-s(r)));
      nt->sigma = std::move(s);
    }
    Eigen::MatrixXd input(2, d);
    input.row(0) = grad.transpose();
    input.row(1) = node.y.transpose();
    const Eigen::MatrixXd p_row = module_forward(params.nodes[i].phi_m, input, node.hidden.m,
                                                 nt != nullptr ? &nt->m_tape : nullptr);
    const Eigen::VectorXd p = p_row.row(0).transpose();
    const Eigen::VectorXd v = node.x - p.cwiseProduct(grad + node.y);
    new_z[i] = soft_threshold(v, p, lambda);
    if (nt != nullptr) {
      nt->x_in = node.x;
      nt->y_in = node.y;
      nt->grad = std::move(grad);
      nt->p = p;
      nt->v = v;
      nt->z = new_z[i];
    }
  }
  // Exchange barrier: z published, neighbor differences formed.
  for (int i = 0; i < n; ++i) state.nodes[i].z = new_z[i];

  std::vector<Eigen::MatrixXd> diffs(n), p_tilde(n), p2(n);
  for (int i = 0; i < n; ++i) {
    const auto& nbrs = topo.neighbors[i];
    const int deg = static_cast<int>(nbrs.size());
    Eigen::MatrixXd delta(deg, d);
    for (int s = 0; s < deg; ++s)
      delta.row(s) = (state.nodes[i].z - state.nodes[nbrs[s]].z).transpose();
    NodeIterTape* nt = tape != nullptr ? &tape->nodes[i] : nullptr;
    if (deg > 0) {
      p_tilde[i] = module_forward(params.nodes[i].phi_s, delta, state.nodes[i].hidden.s,
                                  nt != nullptr ? &nt->s_tape : nullptr);
      p2[i] = module_forward(params.nodes[i].phi_u, delta, state.nodes[i].hidden.u,
                             nt != nullptr ? &nt->u_tape : nullptr);
    } else {
      p_tilde[i].resize(0, d);
      p2[i].resize(0, d);
    }
    diffs[i] = std::move(delta);
  }

  // Second exchange barrier: symmetrize the dual weights once per edge.
  std::vector<Eigen::MatrixXd> p1(n);
  if (symmetrize_duals) {
    for (int i = 0; i < n; ++i) p1[i].resize(topo.degree(i), d);
    for (const auto& [i, j] : topo.edges) {
      const int si = slot_of(topo, i, j);
      const int sj = slot_of(topo, j, i);
      const Eigen::RowVectorXd shared = 0.5 * (p_tilde[i].row(si) + p_tilde[j].row(sj));
      p1[i].row(si) = shared;
      p1[j].row(sj) = shared;
    }
  } else {
    p1 = p_tilde;
  }

  for (int i = 0; i < n; ++i) {
    NodeState& node = state.nodes[i];
    const int deg = topo.degree(i);
    for (int s = 0; s < deg; ++s) {
      node.y += p1[i].row(s).cwiseProduct(diffs[i].row(s)).transpose();
    }
    node.x = node.z;
    for (int s = 0; s < deg; ++s) {
      node.x -= p2[i].row(s).cwiseProduct(diffs[i].row(s)).transpose();
    }
    if (tape != nullptr) {
      NodeIterTape& nt = tape->nodes[i];
      nt.diffs = diffs[i];
      nt.p_tilde = p_tilde[i];
      nt.p1 = p1[i];
      nt.p2 = p2[i];
    }
  }
  check_finite(state, -1);
}

Eigen::VectorXd mean_x(const SimState& state) {
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(state.nodes[0].x.size());
  for (const NodeState& node : state.nodes) mean += node.x;
  return mean / static_cast<double>(state.nodes.size());
}

RolloutResult rollout(const Optimizee& opt, const Topology& topo, const MiLoDoParams& params,
                      int iterations, std::uint64_t seed, bool record_metrics,
                      const SolutionOracle* oracle) {
  if (iterations < 1) throw ParameterError("rollout: iterations must be >= 1");
  RolloutResult result;
  result.state = init_rollout_state(topo, opt.shape.d, seed);
  if (record_metrics) result.records.reserve(iterations);
  for (int k = 0; k < iterations; ++k) {
    try {
      milodo_iteration(result.state, params, opt, topo);
    } catch (const DivergenceError& e) {
      throw DivergenceError(k, e.node,
                            "rollout diverged at iteration " + std::to_string(k) + ", node " +
                                std::to_string(e.node));
    }
    if (record_metrics) {
      IterationRecord rec;
      rec.iter = k + 1;
      const Eigen::VectorXd xbar = mean_x(result.state);
      rec.loss = global_objective(opt, xbar);
      std::vector<Eigen::VectorXd> xs;
      xs.reserve(topo.n);
      for (const NodeState& node : result.state.nodes) xs.push_back(node.x);
      rec.consensus = consensus_error(xs);
      if (oracle != nullptr) rec.gap = optimality_gap(opt, *oracle, xbar);
      result.records.push_back(rec);
    }
  }
  return result;
}

double fixed_point_residual(const Optimizee& opt, const Topology& topo,
                            const MiLoDoParams& params, const SolutionOracle& oracle,
                            std::uint64_t hidden_seed) {
  if (oracle.residual > 1e-8)
    throw ParameterError("fixed_point_residual: oracle tolerance too loose");
  const int d = opt.shape.d;
  SimState state = init_rollout_state(topo, d, hidden_seed);
  // g* = -(1/n) sum grad f_i(x*) is a subgradient of r at x* by optimality.
  Eigen::VectorXd g_star = Eigen::VectorXd::Zero(d);
  std::vector<Eigen::VectorXd> grads(topo.n);
  for (int i = 0; i < topo.n; ++i) {
    grads[i] = local_gradient(opt, i, oracle.x_star);
    g_star -= grads[i];
  }
  g_star /= static_cast<double>(topo.n);
  for (int i = 0; i < topo.n; ++i) {
    state.nodes[i].x = oracle.x_star;
    state.nodes[i].z = oracle.x_star;
    state.nodes[i].y = -grads[i] - g_star;
  }
  SimState before = state;
  milodo_iteration(state, params, opt, topo);
  double residual = 0.0;
  for (int i = 0; i < topo.n; ++i) {
    residual = std::max(residual,
                        (state.nodes[i].x - before.nodes[i].x).lpNorm<Eigen::Infinity>());
    residual = std::max(residual,
                        (state.nodes[i].y - before.nodes[i].y).lpNorm<Eigen::Infinity>());
    residual = std::max(residual,
                        (state.nodes[i].z - before.nodes[i].z).lpNorm<Eigen::Infinity>());
  }
  return residual;
}

}  // namespace milodo
