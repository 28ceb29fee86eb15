#include <cmath>

#include "milodo/errors.hpp"
#include "milodo/milodo.hpp"

namespace milodo {

namespace {

constexpr int H = kLstmHidden;

// Almost-everywhere subgradient of lambda*||x||_1 plus the averaged smooth
// gradient; sign(0) taken as 0.
Eigen::VectorXd loss_gradient_at(const Optimizee& opt, const Eigen::VectorXd& xbar) {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(xbar.size());
  for (int i = 0; i < opt.shape.n; ++i) g += local_gradient(opt, i, xbar);
  g /= static_cast<double>(opt.shape.n);
  for (int l = 0; l < xbar.size(); ++l) {
    if (xbar(l) > 0.0)
      g(l) += opt.shape.lambda;
    else if (xbar(l) < 0.0)
      g(l) -= opt.shape.lambda;
  }
  return g;
}

// Vector-Jacobian product of x -> local_gradient(opt, i, x).
Eigen::VectorXd gradient_vjp(const Optimizee& opt, int node, const NodeIterTape& nt,
                             const Eigen::VectorXd& adj) {
  const Eigen::MatrixXd& a = opt.shard_a[node];
  if (opt.kind == ProblemKind::lasso) return a.transpose() * (a * adj);
  const Eigen::ArrayXd s = nt.sigma.array();
  const Eigen::VectorXd inner = ((a * adj).array() * s * (1.0 - s)).matrix();
  return a.transpose() * inner / static_cast<double>(opt.shape.samples);
}

int slot_of(const Topology& topo, int j, int i) {
  const auto& nbrs = topo.neighbors[j];
  const auto it = std::lower_bound(nbrs.begin(), nbrs.end(), i);
  if (it == nbrs.end() || *it != i) throw ShapeError("slot_of: not a neighbor");
  return static_cast<int>(it - nbrs.begin());
}

}  // namespace

void milodo_backward_segment(const SegmentTape& tape, const SimState& final_state,
                             const Optimizee& opt, const Topology& topo,
                             const MiLoDoParams& params, double weight, MiLoDoParams& grads) {
  const int n = topo.n;
  const int d = opt.shape.d;
  const int steps = static_cast<int>(tape.iters.size());
  if (steps == 0) throw ParameterError("milodo_backward_segment: empty tape");
  const double loss_scale = weight / static_cast<double>(steps);

  // Carried adjoints across time steps.
  std::vector<Eigen::VectorXd> a_x(n, Eigen::VectorXd::Zero(d));
  std::vector<Eigen::VectorXd> a_y(n, Eigen::VectorXd::Zero(d));
  std::vector<HiddenState> a_hidden(n);
  for (int i = 0; i < n; ++i) {
    const int deg = topo.degree(i);
    (void)deg;
    a_hidden[i].m = {Eigen::MatrixXd::Zero(H, d), Eigen::MatrixXd::Zero(H, d)};
    a_hidden[i].s = {Eigen::MatrixXd::Zero(H, d), Eigen::MatrixXd::Zero(H, d)};
    a_hidden[i].u = {Eigen::MatrixXd::Zero(H, d), Eigen::MatrixXd::Zero(H, d)};
  }

  for (int k = steps - 1; k >= 0; --k) {
    const IterationTape& it = tape.iters[k];

    // Loss contribution of the post-iteration average iterate.
    Eigen::VectorXd xbar = Eigen::VectorXd::Zero(d);
    if (k + 1 < steps) {
      for (int i = 0; i < n; ++i) xbar += tape.iters[k + 1].nodes[i].x_in;
    } else {
      for (int i = 0; i < n; ++i) xbar += final_state.nodes[i].x;
    }
    xbar /= static_cast<double>(n);
    const Eigen::VectorXd dxbar = loss_gradient_at(opt, xbar) * (loss_scale / n);
    for (int i = 0; i < n; ++i) a_x[i] += dxbar;

    // Phase A: adjoints of the y/x update weights, and the direct z path.
    std::vector<Eigen::VectorXd> d_z(n, Eigen::VectorXd::Zero(d));
    std::vector<Eigen::MatrixXd> d_diffs(n), d_p1(n), d_p2(n);
    for (int i = 0; i < n; ++i) {
      const NodeIterTape& nt = it.nodes[i];
      const int deg = topo.degree(i);
      d_z[i] = a_x[i];
      d_diffs[i].resize(deg, d);
      d_p1[i].resize(deg, d);
      d_p2[i].resize(deg, d);
      for (int s = 0; s < deg; ++s) {
        d_diffs[i].row(s) = nt.p1.row(s).cwiseProduct(a_y[i].transpose()) -
                            nt.p2.row(s).cwiseProduct(a_x[i].transpose());
        d_p1[i].row(s) = nt.diffs.row(s).cwiseProduct(a_y[i].transpose());
        d_p2[i].row(s) = -nt.diffs.row(s).cwiseProduct(a_x[i].transpose());
      }
    }

    // Phase B: the symmetrized weight is shared per edge.
    std::vector<Eigen::MatrixXd> d_p_tilde(n);
    for (int i = 0; i < n; ++i) d_p_tilde[i].setZero(topo.degree(i), d);
    for (const auto& [i, j] : topo.edges) {
      const int si = slot_of(topo, i, j);
      const int sj = slot_of(topo, j, i);
      const Eigen::RowVectorXd d_edge = 0.5 * (d_p1[i].row(si) + d_p1[j].row(sj));
      d_p_tilde[i].row(si) = d_edge;
      d_p_tilde[j].row(sj) = d_edge;
    }

    // Phase C: backward through phi_S and phi_U into the z differences.
    for (int i = 0; i < n; ++i) {
      const NodeIterTape& nt = it.nodes[i];
      const int deg = topo.degree(i);
      if (deg == 0) continue;
      Eigen::MatrixXd d_input = Eigen::MatrixXd::Zero(deg, d);
      Eigen::MatrixXd d_h = Eigen::MatrixXd::Zero(H, d);
      Eigen::MatrixXd d_c = Eigen::MatrixXd::Zero(H, d);
      module_backward(params.nodes[i].phi_u, nt.u_tape, d_p2[i], a_hidden[i].u.h,
                      a_hidden[i].u.c, grads.nodes[i].phi_u, d_input, d_h, d_c);
      a_hidden[i].u.h = d_h;
      a_hidden[i].u.c = d_c;
      d_diffs[i] += d_input;

      d_input.setZero();
      d_h.setZero();
      d_c.setZero();
      module_backward(params.nodes[i].phi_s, nt.s_tape, d_p_tilde[i], a_hidden[i].s.h,
                      a_hidden[i].s.c, grads.nodes[i].phi_s, d_input, d_h, d_c);
      a_hidden[i].s.h = d_h;
      a_hidden[i].s.c = d_c;
      d_diffs[i] += d_input;
    }

    // Phase D: scatter difference adjoints to both endpoints.
    for (int i = 0; i < n; ++i) {
      const auto& nbrs = topo.neighbors[i];
      for (int s = 0; s < static_cast<int>(nbrs.size()); ++s) {
        d_z[i] += d_diffs[i].row(s).transpose();
        d_z[nbrs[s]] -= d_diffs[i].row(s).transpose();
      }
    }

    // Phase E: prox, phi_M and the gradient-of-gradient path.
    for (int i = 0; i < n; ++i) {
      const NodeIterTape& nt = it.nodes[i];
      const double lambda = opt.shape.lambda;
      Eigen::VectorXd d_v = Eigen::VectorXd::Zero(d);
      Eigen::VectorXd d_p = Eigen::VectorXd::Zero(d);
      for (int l = 0; l < d; ++l) {
        const double threshold = lambda * nt.p(l);
        // Zero threshold makes the prox an exact identity.
        const bool live = std::abs(nt.v(l)) > threshold || threshold == 0.0;
        if (!live) continue;
        d_v(l) = d_z[i](l);
        const double sgn = (nt.v(l) > 0.0) ? 1.0 : (nt.v(l) < 0.0 ? -1.0 : 0.0);
        d_p(l) = -lambda * sgn * d_z[i](l);
      }
      const Eigen::VectorXd gy = nt.grad + nt.y_in;
      d_p -= gy.cwiseProduct(d_v);

      Eigen::VectorXd new_ax = d_v;                               // v = x - p(g + y)
      Eigen::VectorXd new_ay = a_y[i] - nt.p.cwiseProduct(d_v);   // y passes through

      Eigen::MatrixXd d_m_input = Eigen::MatrixXd::Zero(2, d);
      Eigen::MatrixXd d_h = Eigen::MatrixXd::Zero(H, d);
      Eigen::MatrixXd d_c = Eigen::MatrixXd::Zero(H, d);
      module_backward(params.nodes[i].phi_m, nt.m_tape, d_p.transpose(), a_hidden[i].m.h,
                      a_hidden[i].m.c, grads.nodes[i].phi_m, d_m_input, d_h, d_c);
      a_hidden[i].m.h = d_h;
      a_hidden[i].m.c = d_c;

      Eigen::VectorXd d_grad = d_m_input.row(0).transpose() - nt.p.cwiseProduct(d_v);
      new_ay += d_m_input.row(1).transpose();
      new_ax += gradient_vjp(opt, i, nt, d_grad);

      a_x[i] = new_ax;
      a_y[i] = new_ay;
    }
  }
}

}  // namespace milodo
