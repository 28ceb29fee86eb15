#include "milodo/problems.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "milodo/errors.hpp"
#include "milodo/rng.hpp"

namespace milodo {

namespace {

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

// ln(1 + e^t) without overflow.
double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

void check_node(const Optimizee& opt, int node) {
  if (node < 0 || node >= opt.shape.n) throw ParameterError("node id out of range");
}

// Shared generator front-end: A (nN x d) sampled row by row, then the planted
// vector, then its 75% smallest-magnitude entries reset to zero.
struct RawInstance {
  Eigen::MatrixXd a;
  Eigen::VectorXd planted;
};

RawInstance sample_design(const ProblemShape& shape, Rng& rng) {
  const int rows = shape.n * shape.samples;
  RawInstance raw;
  raw.a.resize(rows, shape.d);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < shape.d; ++c) raw.a(r, c) = rng.normal();
  raw.planted.resize(shape.d);
  for (int c = 0; c < shape.d; ++c) raw.planted(c) = rng.normal();

  const int zero_count = static_cast<int>(std::ceil(0.75 * shape.d));
  std::vector<int> order(shape.d);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int l, int r) {
    return std::abs(raw.planted(l)) < std::abs(raw.planted(r));
  });
  for (int k = 0; k < zero_count; ++k) raw.planted(order[k]) = 0.0;
  return raw;
}

Optimizee shard(const ProblemShape& shape, ProblemKind kind, std::uint64_t seed,
                const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                Eigen::VectorXd planted) {
  Optimizee opt;
  opt.shape = shape;
  opt.kind = kind;
  opt.seed = seed;
  opt.planted = std::move(planted);
  opt.shard_a.reserve(shape.n);
  opt.shard_b.reserve(shape.n);
  for (int i = 0; i < shape.n; ++i) {
    opt.shard_a.push_back(a.middleRows(i * shape.samples, shape.samples));
    opt.shard_b.push_back(b.segment(i * shape.samples, shape.samples));
  }
  return opt;
}

}  // namespace

ProblemKind problem_kind_from_string(const std::string& s) {
  if (s == "lasso") return ProblemKind::lasso;
  if (s == "logistic") return ProblemKind::logistic;
  throw ParameterError("unknown problem kind: " + s);
}

std::string to_string(ProblemKind kind) {
  return kind == ProblemKind::lasso ? "lasso" : "logistic";
}

Optimizee gen_lasso(const ProblemShape& shape, std::uint64_t seed) {
  if (!shape.valid()) throw ParameterError("invalid problem shape");
  Rng rng(seed);
  RawInstance raw = sample_design(shape, rng);
  const int rows = shape.n * shape.samples;
  Eigen::VectorXd noise(rows);
  for (int r = 0; r < rows; ++r) noise(r) = rng.normal();
  const Eigen::VectorXd b = raw.a * raw.planted + 0.1 * noise;
  return shard(shape, ProblemKind::lasso, seed, raw.a, b, std::move(raw.planted));
}

Optimizee gen_logistic(const ProblemShape& shape, std::uint64_t seed) {
  if (!shape.valid()) throw ParameterError("invalid problem shape");
  Rng rng(seed);
  RawInstance raw = sample_design(shape, rng);
  const int rows = shape.n * shape.samples;
  Eigen::VectorXd b(rows);
  const Eigen::VectorXd margin = raw.a * raw.planted;
  for (int r = 0; r < rows; ++r) b(r) = margin(r) >= 0.0 ? 1.0 : 0.0;
  return shard(shape, ProblemKind::logistic, seed, raw.a, b, std::move(raw.planted));
}

Eigen::VectorXd local_gradient(const Optimizee& opt, int node, const Eigen::VectorXd& x) {
  check_node(opt, node);
  if (x.size() != opt.shape.d) throw ShapeError("local_gradient: x has wrong dimension");
  const Eigen::MatrixXd& a = opt.shard_a[node];
  const Eigen::VectorXd& b = opt.shard_b[node];
  if (opt.kind == ProblemKind::lasso) return a.transpose() * (a * x - b);
  Eigen::VectorXd s = a * x;
  for (int r = 0; r < s.size(); ++r) s(r) = sigmoid(s(r));
  return a.transpose() * (s - b) / static_cast<double>(opt.shape.samples);
}

double global_objective(const Optimizee& opt, const Eigen::VectorXd& x) {
  double smooth = 0.0;
  for (int i = 0; i < opt.shape.n; ++i) {
    const Eigen::VectorXd t = opt.shard_a[i] * x;
    if (opt.kind == ProblemKind::lasso) {
      smooth += 0.5 * (t - opt.shard_b[i]).squaredNorm();
    } else {
      double loss = 0.0;
      for (int r = 0; r < t.size(); ++r) {
        const double b = opt.shard_b[i](r);
        loss += b * softplus(-t(r)) + (1.0 - b) * softplus(t(r));
      }
      smooth += loss / static_cast<double>(opt.shape.samples);
    }
  }
  return smooth / opt.shape.n + opt.shape.lambda * x.lpNorm<1>();
}

Eigen::VectorXd prox_l1_weighted(const Eigen::VectorXd& v, const Eigen::VectorXd& p,
                                 double lambda) {
  if (v.size() != p.size()) throw ShapeError("prox_l1_weighted: size mismatch");
  if (lambda < 0.0) throw ParameterError("prox_l1_weighted: negative lambda");
  Eigen::VectorXd out(v.size());
  for (int l = 0; l < v.size(); ++l) {
    if (!(p(l) > 0.0)) throw ParameterError("prox_l1_weighted: nonpositive weight entry");
    const double shrink = std::abs(v(l)) - lambda * p(l);
    out(l) = shrink > 0.0 ? std::copysign(shrink, v(l)) : 0.0;
  }
  return out;
}

SolutionOracle centralized_solve(const Optimizee& opt, double tol, int max_iters) {
  if (!(tol > 0.0)) throw ParameterError("centralized_solve: tol must be positive");
  const int d = opt.shape.d;
  const int n = opt.shape.n;

  // Smoothness constant by power iteration on the averaged Gram matrix.
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
  for (int i = 0; i < n; ++i) gram += opt.shard_a[i].transpose() * opt.shard_a[i];
  gram /= static_cast<double>(n);
  if (opt.kind == ProblemKind::logistic) gram /= 4.0 * opt.shape.samples;
  Eigen::VectorXd v = Eigen::VectorXd::Ones(d).normalized();
  double lip = 1.0;
  for (int it = 0; it < 200; ++it) {
    v = (gram * v).eval();
    lip = v.norm();
    if (lip == 0.0) break;
    v /= lip;
  }
  if (!(lip > 0.0)) lip = 1.0;
  const double step = 1.0 / lip;

  auto grad = [&](const Eigen::VectorXd& x) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i) g += local_gradient(opt, i, x);
    return (g / n).eval();
  };
  const Eigen::VectorXd step_vec = Eigen::VectorXd::Constant(d, step);
  auto prox_step = [&](const Eigen::VectorXd& x) {
    return prox_l1_weighted(x - step * grad(x), step_vec, opt.shape.lambda);
  };

  Eigen::VectorXd x = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd y = x;
  double t = 1.0;
  double residual = std::numeric_limits<double>::infinity();
  for (int k = 0; k < max_iters; ++k) {
    const Eigen::VectorXd x_next = prox_step(y);
    // Gradient-scheme adaptive restart.
    if ((y - x_next).dot(x_next - x) > 0.0) {
      t = 1.0;
      y = x;
      continue;
    }
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
    y = x_next + ((t - 1.0) / t_next) * (x_next - x);
    x = x_next;
    t = t_next;

    if (k % 10 == 0 || k == max_iters - 1) {
      residual = (x - prox_step(x)).lpNorm<Eigen::Infinity>();
      if (residual <= tol) {
        SolutionOracle oracle;
        oracle.x_star = x;
        oracle.objective_star = global_objective(opt, x);
        oracle.residual = residual;
        oracle.iterations = k + 1;
        return oracle;
      }
    }
  }
  throw ConvergenceError(residual, "centralized_solve: max_iters exceeded");
}

double consensus_error(const std::vector<Eigen::VectorXd>& states) {
  if (states.empty()) throw ParameterError("consensus_error: empty state list");
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(states[0].size());
  for (const auto& x : states) {
    if (x.size() != mean.size()) throw ShapeError("consensus_error: dimension mismatch");
    mean += x;
  }
  mean /= static_cast<double>(states.size());
  double err = 0.0;
  for (const auto& x : states) err += (x - mean).norm();
  return err / static_cast<double>(states.size());
}

double optimality_gap(const Optimizee& opt, const SolutionOracle& oracle,
                      const Eigen::VectorXd& x) {
  return std::max(global_objective(opt, x) - oracle.objective_star, 0.0);
}

namespace {

constexpr char kOptMagic[8] = {'M', 'L', 'O', 'P', 'T', '0', '0', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

}  // namespace

void save_optimizee_file(const Optimizee& opt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot open for write: " + path);
  out.write(kOptMagic, sizeof(kOptMagic));
  write_pod<std::uint32_t>(out, opt.kind == ProblemKind::lasso ? 0 : 1);
  write_pod<std::int32_t>(out, opt.shape.n);
  write_pod<std::int32_t>(out, opt.shape.d);
  write_pod<std::int32_t>(out, opt.shape.samples);
  write_pod<double>(out, opt.shape.lambda);
  write_pod<std::uint64_t>(out, opt.seed);
  for (int i = 0; i < opt.shape.n; ++i) {
    for (int r = 0; r < opt.shape.samples; ++r)
      for (int c = 0; c < opt.shape.d; ++c) write_pod<double>(out, opt.shard_a[i](r, c));
    for (int r = 0; r < opt.shape.samples; ++r) write_pod<double>(out, opt.shard_b[i](r));
  }
}

Optimizee load_optimizee_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot open for read: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kOptMagic, sizeof(magic)) != 0)
    throw ParameterError("not an optimizee file: " + path);
  Optimizee opt;
  opt.kind = read_pod<std::uint32_t>(in) == 0 ? ProblemKind::lasso : ProblemKind::logistic;
  opt.shape.n = read_pod<std::int32_t>(in);
  opt.shape.d = read_pod<std::int32_t>(in);
  opt.shape.samples = read_pod<std::int32_t>(in);
  opt.shape.lambda = read_pod<double>(in);
  opt.seed = read_pod<std::uint64_t>(in);
  if (!opt.shape.valid()) throw ParameterError("optimizee file: invalid shape");
  opt.shard_a.resize(opt.shape.n);
  opt.shard_b.resize(opt.shape.n);
  for (int i = 0; i < opt.shape.n; ++i) {
    opt.shard_a[i].resize(opt.shape.samples, opt.shape.d);
    for (int r = 0; r < opt.shape.samples; ++r)
      for (int c = 0; c < opt.shape.d; ++c) opt.shard_a[i](r, c) = read_pod<double>(in);
    opt.shard_b[i].resize(opt.shape.samples);
    for (int r = 0; r < opt.shape.samples; ++r) opt.shard_b[i](r) = read_pod<double>(in);
  }
  if (!in) throw ParameterError("optimizee file truncated: " + path);
  return opt;
}

}  // namespace milodo
