#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "milodo/graph.hpp"
#include "milodo/milodo.hpp"
#include "milodo/problems.hpp"

namespace milodo {

enum class BaselineAlg { prox_dgd, prox_atc, pg_extra, prox_ed };

BaselineAlg baseline_from_string(const std::string& s);
std::string to_string(BaselineAlg alg);

struct BaselineConfig {
  BaselineAlg alg = BaselineAlg::prox_ed;
  GossipMatrix gossip;
  double gamma = 0.0;
  int iterations = 0;
};

// Per-node rows; auxiliary matrices are allocated lazily per algorithm.
struct BaselineState {
  Eigen::MatrixXd x;       // n x d
  Eigen::MatrixXd z;       // n x d
  Eigen::MatrixXd z_prev;  // n x d (prox_atc, pg_extra)
  Eigen::MatrixXd y;       // n x d
  Eigen::MatrixXd y_tilde; // n x d (prox_atc, prox_ed)
  Eigen::MatrixXd z_tilde; // n x d (pg_extra)
  Eigen::MatrixXd x_prev;  // n x d (pg_extra)
  int k = 0;
};

BaselineState init_baseline_state(BaselineAlg alg, int n, int d);

// Difference-form mixing: x_i - sum_j w_ij (x_i - x_j). Never forms
// sum_j w_ij x_j directly, so the all-equal subspace is preserved exactly
// even under perturbed weights.
Eigen::MatrixXd gossip_mix_robust(const Eigen::MatrixXd& values, const GossipMatrix& gossip,
                                  const Topology& topo);

void prox_dgd_step(BaselineState& state, const Optimizee& opt, const BaselineConfig& cfg,
                   const Topology& topo);
void prox_atc_step(BaselineState& state, const Optimizee& opt, const BaselineConfig& cfg,
                   const Topology& topo);
void pg_extra_step(BaselineState& state, const Optimizee& opt, const BaselineConfig& cfg,
                   const Topology& topo);
void prox_ed_step(BaselineState& state, const Optimizee& opt, const BaselineConfig& cfg,
                  const Topology& topo);

void baseline_step(BaselineState& state, const Optimizee& opt, const BaselineConfig& cfg,
                   const Topology& topo);

struct BaselineRunResult {
  BaselineState state;
  std::vector<IterationRecord> records;
};

BaselineRunResult run_baseline(const Optimizee& opt, const Topology& topo,
                               const BaselineConfig& cfg,
                               const SolutionOracle* oracle = nullptr,
                               bool record_metrics = true);

// Tuned learning rate when the problem shape matches a known configuration;
// nullopt otherwise (the caller must then supply gamma explicitly).
std::optional<double> default_gamma(BaselineAlg alg, ProblemKind kind, const ProblemShape& shape);

// Prox-ED trajectory executed in 32-bit arithmetic with 32-bit-rounded
// weights, in either the difference (robust) or weighted-sum (direct) mixing
// form; returns the final optimality gap evaluated in 64-bit.
double prox_ed_gap_fp32(const Optimizee& opt, const Topology& topo, const GossipMatrix& gossip,
                        double gamma, int iterations, bool robust_mixing,
                        const SolutionOracle& oracle);

}  // namespace milodo
