#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace milodo {

struct ProblemShape {
  int n = 0;       // nodes
  int d = 0;       // feature dimension
  int samples = 0; // samples per node
  double lambda = 0.0;

  bool valid() const { return n >= 1 && d >= 1 && samples >= 1 && lambda >= 0.0; }
};

enum class ProblemKind { lasso, logistic };

ProblemKind problem_kind_from_string(const std::string& s);
std::string to_string(ProblemKind kind);

// One decentralized problem instance: per-node data shards A_i (N x d),
// b_i (length N). Immutable after generation.
struct Optimizee {
  ProblemShape shape;
  ProblemKind kind = ProblemKind::lasso;
  std::uint64_t seed = 0;
  std::vector<Eigen::MatrixXd> shard_a;
  std::vector<Eigen::VectorXd> shard_b;
  // Planted generator coefficients; kept for diagnostics, not serialized.
  Eigen::VectorXd planted;
};

Optimizee gen_lasso(const ProblemShape& shape, std::uint64_t seed);
Optimizee gen_logistic(const ProblemShape& shape, std::uint64_t seed);

Eigen::VectorXd local_gradient(const Optimizee& opt, int node, const Eigen::VectorXd& x);
double global_objective(const Optimizee& opt, const Eigen::VectorXd& x);

// Coordinate-wise soft threshold: the exact minimizer of
// lambda*||y||_1 + 0.5*||y - v||^2_{Diag(p)^{-1}}.
Eigen::VectorXd prox_l1_weighted(const Eigen::VectorXd& v, const Eigen::VectorXd& p,
                                 double lambda);

struct SolutionOracle {
  Eigen::VectorXd x_star;
  double objective_star = 0.0;
  double residual = 0.0;  // fixed-point residual achieved, inf-norm
  int iterations = 0;
};

// FISTA with step 1/L and gradient-mapping stopping rule.
SolutionOracle centralized_solve(const Optimizee& opt, double tol = 1e-12,
                                 int max_iters = 2000000);

double consensus_error(const std::vector<Eigen::VectorXd>& states);
double optimality_gap(const Optimizee& opt, const SolutionOracle& oracle,
                      const Eigen::VectorXd& x);

// Binary serialization: shape, kind, seed, row-major shards. Loading
// reproduces evaluation results bit-exactly.
void save_optimizee_file(const Optimizee& opt, const std::string& path);
Optimizee load_optimizee_file(const std::string& path);

}  // namespace milodo
