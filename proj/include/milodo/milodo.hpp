#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "milodo/graph.hpp"
#include "milodo/neuro.hpp"
#include "milodo/problems.hpp"

namespace milodo {

struct NodeState {
  Eigen::VectorXd x, y, z;
  HiddenState hidden;
};

struct SimState {
  std::vector<NodeState> nodes;
};

struct IterationRecord {
  int iter = 0;
  double loss = 0.0;
  double consensus = 0.0;
  double gap = -1.0;  // negative when no oracle was supplied
  double wall_ms = 0.0;
};

// Per-node saved values of one taped iteration.
struct NodeIterTape {
  Eigen::VectorXd x_in, y_in;
  Eigen::VectorXd grad;
  Eigen::VectorXd sigma;  // logistic only: sigmoid(A x_in)
  ModuleTape m_tape, s_tape, u_tape;
  Eigen::VectorXd p;      // phi_M output
  Eigen::VectorXd v;      // prox input
  Eigen::VectorXd z;
  Eigen::MatrixXd diffs;  // deg x d, row s = z_i - z_{neighbor s}
  Eigen::MatrixXd p_tilde;  // deg x d
  Eigen::MatrixXd p1;       // deg x d, symmetrized per edge
  Eigen::MatrixXd p2;       // deg x d
};

struct IterationTape {
  std::vector<NodeIterTape> nodes;
};

// x_i = y_i = z_i = 0, hidden states standard normal seeded per (node, module).
SimState init_rollout_state(const Topology& topo, int d, std::uint64_t seed);

// One synchronous round of the structured primal-dual update. All reads refer
// to the previous phase's published values. Throws DivergenceError on any
// non-finite state. symmetrize_duals=false is a test hook that skips the
// per-edge averaging of the dual weights and breaks dual conservation.
void milodo_iteration(SimState& state, const MiLoDoParams& params, const Optimizee& opt,
                      const Topology& topo, IterationTape* tape = nullptr,
                      bool symmetrize_duals = true);

struct RolloutResult {
  SimState state;
  std::vector<IterationRecord> records;
};

RolloutResult rollout(const Optimizee& opt, const Topology& topo, const MiLoDoParams& params,
                      int iterations, std::uint64_t seed, bool record_metrics = true,
                      const SolutionOracle* oracle = nullptr);

// Builds the consensual optimal state from the oracle, runs one iteration and
// returns the largest inf-norm change across all x, y, z.
double fixed_point_residual(const Optimizee& opt, const Topology& topo,
                            const MiLoDoParams& params, const SolutionOracle& oracle,
                            std::uint64_t hidden_seed = 0);

// Forward pass of one truncated-BPTT segment plus the recorded tapes.
struct SegmentTape {
  std::vector<IterationTape> iters;
};

// Reverse pass over a recorded segment: accumulates weight * d/dtheta of
// (1/K_T) sum_k [f(xbar^k) + r(xbar^k)] into grads. final_state must be the
// state after the segment's last iteration.
void milodo_backward_segment(const SegmentTape& tape, const SimState& final_state,
                             const Optimizee& opt, const Topology& topo,
                             const MiLoDoParams& params, double weight, MiLoDoParams& grads);

Eigen::VectorXd mean_x(const SimState& state);

}  // namespace milodo
