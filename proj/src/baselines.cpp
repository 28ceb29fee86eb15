#include "milodo/baselines.hpp"

#include <cmath>

#include "milodo/errors.hpp"

namespace milodo {

namespace {

Eigen::MatrixXd local_gradients(const Optimizee& opt, const Eigen::MatrixXd& x) {
  Eigen::MatrixXd g(x.rows(), x.cols());
  for (int i = 0; i < x.rows(); ++i)
    g.row(i) = local_gradient(opt, i, x.row(i).transpose()).transpose();
  return g;
}

Eigen::MatrixXd prox_rows(const Eigen::MatrixXd& v, double threshold) {
  return v.array().sign() * (v.array().abs() - threshold).max(0.0);
}

void check_finite(const Eigen::MatrixXd& x, int iteration) {
  for (int i = 0; i < x.rows(); ++i)
    if (!x.row(i).allFinite())
      throw DivergenceError(iteration, i,
                            "baseline diverged at iteration " + std::to_string(iteration) +
                                ", node " + std::to_string(i));
}

}  // namespace

BaselineAlg baseline_from_string(const std::string& s) {
  if (s == "prox_dgd") return BaselineAlg::prox_dgd;
  if (s == "prox_atc") return BaselineAlg::prox_atc;
  if (s == "pg_extra") return BaselineAlg::pg_extra;
  if (s == "prox_ed") return BaselineAlg::prox_ed;
  throw ParameterError("unknown baseline: " + s);
}

std::string to_string(BaselineAlg alg) {
  switch (alg) {
    case BaselineAlg::prox_dgd: return "prox_dgd";
    case BaselineAlg::prox_atc: return "prox_atc";
    case BaselineAlg::pg_extra: return "pg_extra";
    case BaselineAlg::prox_ed: return "prox_ed";
  }
  return "?";
}

BaselineState init_baseline_state(BaselineAlg alg, int n, int d) {
  BaselineState state;
  state.x.setZero(n, d);
  state.z.setZero(n, d);
  state.z_prev.setZero(n, d);
  state.y.setZero(n, d);
  state.y_tilde.setZero(n, d);
  state.z_tilde.setZero(n, d);
  state.x_prev.setZero(n, d);
  state.k = 0;
  (void)alg;
  return state;
}

Eigen::MatrixXd gossip_mix_robust(const Eigen::MatrixXd& values, const GossipMatrix& gossip,
                                  const Topology& topo) {
  Eigen::MatrixXd out = values;
  for (int i = 0; i < topo.n; ++i)
    for (int j : topo.neighbors[i])
      out.row(i) -= gossip.w(i, j) * (values.row(i) - values.row(j));
  return out;
}

void prox_dgd_step(BaselineState& state, const Optimizee& opt, const BaselineConfig& cfg,
                   const Topology& topo) {
  const Eigen::MatrixXd z = state.x - cfg.gamma * local_gradients(opt, state.x);
  state.x = prox_rows(gossip_mix_robust(z, cfg.gossip, topo), cfg.gamma * opt.shape.lambda);
  state.z = z;
  ++state.k;
}

void prox_atc_step(BaselineState& state, const Optimizee& opt, const BaselineConfig& cfg,
                   const Topology& topo) {
  const Eigen::MatrixXd z_next = state.x - cfg.gamma * local_gradients(opt, state.x);
  const Eigen::MatrixXd zt_next = state.y_tilde - z_next + state.z;
  // y = 2*yt - zt + sum_j w_ij (zt_i - zt_j)
  const Eigen::MatrixXd y_next =
      2.0 * state.y_tilde - zt_next + (zt_next - gossip_mix_robust(zt_next, cfg.gossip, topo));
  const Eigen::MatrixXd yt_next = gossip_mix_robust(y_next, cfg.gossip, topo);
  state.x = prox_rows(yt_next, cfg.gamma * opt.shape.lambda);
  state.z = z_next;
  state.z_tilde = zt_next;
  state.y = y_next;
  state.y_tilde = yt_next;
  ++state.k;
}

void pg_extra_step(BaselineState& state, const Optimizee& opt, const BaselineConfig& cfg,
                   const Topology& topo) {
  const Eigen::MatrixXd grad = local_gradients(opt, state.x);
  const Eigen::MatrixXd z_next = gossip_mix_robust(state.x, cfg.gossip, topo) - cfg.gamma * grad;
  Eigen::MatrixXd zt_next;
  if (state.k == 0) {
    zt_next = z_next;
  } else {
    const Eigen::MatrixXd grad_prev = local_gradients(opt, state.x_prev);
    const Eigen::MatrixXd mix_prev =
        state.x_prev - gossip_mix_robust(state.x_prev, cfg.gossip, topo);
    zt_next = z_next + state.z_tilde - state.x_prev + 0.5 * mix_prev + cfg.gamma * grad_prev;
  }
  state.x_prev = state.x;
  state.x = prox_rows(zt_next, cfg.gamma * opt.shape.lambda);
  state.z = z_next;
  state.z_tilde = zt_next;
  ++state.k;
}

void prox_ed_step(BaselineState& state, const Optimizee& opt, const BaselineConfig& cfg,
                  const Topology& topo) {
  const Eigen::MatrixXd z_next = state.x - cfg.gamma * local_gradients(opt, state.x);
  const Eigen::MatrixXd y_next = state.y_tilde + z_next - state.z;
  // yt = y - (1/2) sum_j w_ij (y_i - y_j)
  const Eigen::MatrixXd yt_next =
      y_next - 0.5 * (y_next - gossip_mix_robust(y_next, cfg.gossip, topo));
  state.x = prox_rows(yt_next, cfg.gamma * opt.shape.lambda);
  state.z = z_next;
  state.y = y_next;
  state.y_tilde = yt_next;
  ++state.k;
}

void baseline_step(BaselineState& state, const Optimizee& opt, const BaselineConfig& cfg,
                   const Topology& topo) {
  switch (cfg.alg) {
    case BaselineAlg::prox_dgd: prox_dgd_step(state, opt, cfg, topo); break;
    case BaselineAlg::prox_atc: prox_atc_step(state, opt, cfg, topo); break;
    case BaselineAlg::pg_extra: pg_extra_step(state, opt, cfg, topo); break;
    case BaselineAlg::prox_ed: prox_ed_step(state, opt, cfg, topo); break;
  }
}

BaselineRunResult run_baseline(const Optimizee& opt, const Topology& topo,
                               const BaselineConfig& cfg, const SolutionOracle* oracle,
                               bool record_metrics) {
  if (!(cfg.gamma > 0.0)) throw ParameterError("run_baseline: gamma must be positive");
  if (cfg.iterations < 1) throw ParameterError("run_baseline: iterations must be >= 1");
  BaselineRunResult result;
  result.state = init_baseline_state(cfg.alg, topo.n, opt.shape.d);
  if (record_metrics) result.records.reserve(cfg.iterations);
  for (int k = 0; k < cfg.iterations; ++k) {
    baseline_step(result.state, opt, cfg, topo);
    check_finite(result.state.x, k);
    if (record_metrics) {
      IterationRecord rec;
      rec.iter = k + 1;
      const Eigen::VectorXd xbar = result.state.x.colwise().mean().transpose();
      rec.loss = global_objective(opt, xbar);
      std::vector<Eigen::VectorXd> xs;
      xs.reserve(topo.n);
      for (int i = 0; i < topo.n; ++i) xs.push_back(result.state.x.row(i).transpose());
      rec.consensus = consensus_error(xs);
      if (oracle != nullptr) rec.gap = optimality_gap(opt, *oracle, xbar);
      result.records.push_back(rec);
    }
  }
  return result;
}

std::optional<double> default_gamma(BaselineAlg alg, ProblemKind kind,
                                    const ProblemShape& shape) {
  struct Row {
    ProblemKind kind;
    int n, d, samples;
    double lambda;
    double ed, extra, atc, dgd;
  };
  static const Row rows[] = {
      {ProblemKind::lasso, 10, 300, 10, 0.1, 0.03, 0.02, 0.025, 0.04},
      {ProblemKind::lasso, 10, 30000, 1000, 0.1, 0.03, 0.02, 0.025, 0.04},
      {ProblemKind::lasso, 10, 200, 10, 0.1, 0.05, 0.04, 0.045, 0.05},
      {ProblemKind::lasso, 10, 20000, 1000, 0.1, 0.05, 0.04, 0.045, 0.05},
      {ProblemKind::lasso, 10, 15000, 1000, 0.0, 0.08, 0.05, 0.085, 0.09},
      {ProblemKind::logistic, 10, 50, 100, 0.1, 1.0, 0.8, 0.4, 1.0},
      {ProblemKind::logistic, 10, 14, 100, 0.1, 1.9, 1.7, 1.8, 2.0},
  };
  for (const Row& row : rows) {
    if (row.kind == kind && row.n == shape.n && row.d == shape.d &&
        row.samples == shape.samples && row.lambda == shape.lambda) {
      switch (alg) {
        case BaselineAlg::prox_ed: return row.ed;
        case BaselineAlg::pg_extra: return row.extra;
        case BaselineAlg::prox_atc: return row.atc;
        case BaselineAlg::prox_dgd: return row.dgd;
      }
    }
  }
  return std::nullopt;
}

double prox_ed_gap_fp32(const Optimizee& opt, const Topology& topo, const GossipMatrix& gossip,
                        double gamma, int iterations, bool robust_mixing,
                        const SolutionOracle& oracle) {
  using MatF = Eigen::MatrixXf;
  using VecF = Eigen::VectorXf;
  const int n = topo.n;
  const int d = opt.shape.d;
  const float g32 = static_cast<float>(gamma);
  const float thr = static_cast<float>(gamma * opt.shape.lambda);

  std::vector<MatF> a(n);
  std::vector<VecF> b(n);
  for (int i = 0; i < n; ++i) {
    a[i] = opt.shard_a[i].cast<float>();
    b[i] = opt.shard_b[i].cast<float>();
  }
  MatF w32 = gossip.w.cast<float>();

  auto mix = [&](const MatF& values) {
    MatF out;
    if (robust_mixing) {
      out = values;
      for (int i = 0; i < n; ++i)
        for (int j : topo.neighbors[i]) out.row(i) -= w32(i, j) * (values.row(i) - values.row(j));
    } else {
      out.setZero(n, d);
      for (int i = 0; i < n; ++i) {
        out.row(i) = w32(i, i) * values.row(i);
        for (int j : topo.neighbors[i]) out.row(i) += w32(i, j) * values.row(j);
      }
    }
    return out;
  };

  MatF x = MatF::Zero(n, d), z = MatF::Zero(n, d), yt = MatF::Zero(n, d);
  for (int k = 0; k < iterations; ++k) {
    MatF grad(n, d);
    for (int i = 0; i < n; ++i)
      grad.row(i) = (a[i].transpose() * (a[i] * x.row(i).transpose() - b[i])).transpose();
    const MatF z_next = x - g32 * grad;
    const MatF y_next = yt + z_next - z;
    yt = y_next - 0.5f * (y_next - mix(y_next));
    x = yt.array().sign() * (yt.array().abs() - thr).max(0.0f);
    z = z_next;
  }
  const Eigen::VectorXd xbar = x.colwise().mean().transpose().cast<double>();
  return global_objective(opt, xbar) - oracle.objective_star;
}

}  // namespace milodo
