#include "milodo/neuro.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "milodo/errors.hpp"
#include "milodo/rng.hpp"

namespace milodo {

namespace {

constexpr int H = kLstmHidden;

Eigen::ArrayXXd sigmoid(const Eigen::ArrayXXd& t) { return 1.0 / (1.0 + (-t).exp()); }

struct TensorView {
  double* data;
  std::size_t size;
};

void collect_views(LstmModuleParams& m, std::vector<TensorView>& out) {
  auto add = [&](auto& tensor) {
    out.push_back({tensor.data(), static_cast<std::size_t>(tensor.size())});
  };
  add(m.w_input);
  add(m.w_hidden);
  add(m.bias);
  add(m.mlp_w1);
  add(m.mlp_b1);
  add(m.mlp_w2);
  add(m.mlp_b2);
}

std::vector<TensorView> tensor_views(MiLoDoParams& params) {
  std::vector<TensorView> views;
  for (auto& node : params.nodes) {
    collect_views(node.phi_m, views);
    collect_views(node.phi_s, views);
    collect_views(node.phi_u, views);
  }
  return views;
}

LstmModuleParams make_module(int in_dim, int out_dim, OutputActivation act) {
  LstmModuleParams m;
  m.in_dim = in_dim;
  m.out_dim = out_dim;
  m.activation = act;
  m.w_input.setZero(4 * H, in_dim);
  m.w_hidden.setZero(4 * H, H);
  m.bias.setZero(4 * H);
  m.mlp_w1.setZero(H, H);
  m.mlp_b1.setZero(H);
  m.mlp_w2.setZero(out_dim, H);
  m.mlp_b2.setZero(out_dim);
  return m;
}

void fill_uniform(Eigen::Ref<Eigen::MatrixXd> tensor, int fan_in, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (int c = 0; c < tensor.cols(); ++c)
    for (int r = 0; r < tensor.rows(); ++r) tensor(r, c) = rng.uniform(-bound, bound);
}

void randomize_module(LstmModuleParams& m, Rng& rng) {
  fill_uniform(m.w_input, m.in_dim, rng);
  fill_uniform(m.w_hidden, H, rng);
  fill_uniform(m.bias, H, rng);
  fill_uniform(m.mlp_w1, H, rng);
  fill_uniform(m.mlp_b1, H, rng);
  fill_uniform(m.mlp_w2, H, rng);
  fill_uniform(m.mlp_b2, H, rng);
}

}  // namespace

void for_each_tensor(MiLoDoParams& params,
                     const std::function<void(Eigen::Map<Eigen::VectorXd>)>& fn) {
  for (const TensorView& view : tensor_views(params))
    fn(Eigen::Map<Eigen::VectorXd>(view.data, view.size));
}

void for_each_tensor(const MiLoDoParams& params,
                     const std::function<void(Eigen::Map<const Eigen::VectorXd>)>& fn) {
  for (const TensorView& view : tensor_views(const_cast<MiLoDoParams&>(params)))
    fn(Eigen::Map<const Eigen::VectorXd>(view.data, view.size));
}

MiLoDoParams zeros_like(const MiLoDoParams& params) {
  MiLoDoParams out = params;
  for_each_tensor(out, [](Eigen::Map<Eigen::VectorXd> t) { t.setZero(); });
  return out;
}

std::size_t parameter_count(const MiLoDoParams& params) {
  std::size_t count = 0;
  for_each_tensor(params,
                  [&](Eigen::Map<const Eigen::VectorXd> t) { count += t.size(); });
  return count;
}

Eigen::VectorXd flatten(const MiLoDoParams& params) {
  Eigen::VectorXd flat(parameter_count(params));
  Eigen::Index at = 0;
  for_each_tensor(params, [&](Eigen::Map<const Eigen::VectorXd> t) {
    flat.segment(at, t.size()) = t;
    at += t.size();
  });
  return flat;
}

void unflatten(const Eigen::VectorXd& flat, MiLoDoParams& params) {
  if (flat.size() != static_cast<Eigen::Index>(parameter_count(params)))
    throw ShapeError("unflatten: length mismatch");
  Eigen::Index at = 0;
  for_each_tensor(params, [&](Eigen::Map<Eigen::VectorXd> t) {
    t = flat.segment(at, t.size());
    at += t.size();
  });
}

Eigen::MatrixXd module_forward(const LstmModuleParams& params, const Eigen::MatrixXd& input,
                               LstmBank& bank, ModuleTape* tape) {
  if (input.rows() != params.in_dim) throw ShapeError("module_forward: input dimension mismatch");
  const int d = static_cast<int>(input.cols());
  if (bank.h.rows() != H || bank.h.cols() != d || bank.c.cols() != d)
    throw ShapeError("module_forward: hidden bank shape mismatch");

  Eigen::ArrayXXd pre = (params.w_input * input + params.w_hidden * bank.h).array();
  pre.colwise() += params.bias.array();

  const Eigen::ArrayXXd gate_i = sigmoid(pre.topRows(H));
  const Eigen::ArrayXXd gate_f = sigmoid(pre.middleRows(H, H));
  const Eigen::ArrayXXd gate_g = pre.middleRows(2 * H, H).tanh();
  const Eigen::ArrayXXd gate_o = sigmoid(pre.bottomRows(H));

  const Eigen::ArrayXXd c_new = gate_f * bank.c.array() + gate_i * gate_g;
  const Eigen::ArrayXXd tanh_c = c_new.tanh();
  const Eigen::MatrixXd h_new = (gate_o * tanh_c).matrix();

  Eigen::MatrixXd mlp_pre = params.mlp_w1 * h_new;
  mlp_pre.colwise() += params.mlp_b1;
  const Eigen::MatrixXd relu1 = mlp_pre.cwiseMax(0.0);
  Eigen::MatrixXd out_pre = params.mlp_w2 * relu1;
  out_pre.colwise() += params.mlp_b2;

  Eigen::MatrixXd out = params.activation == OutputActivation::relu
                            ? out_pre.cwiseMax(0.0).eval()
                            : out_pre.array().exp().matrix().eval();

  if (tape != nullptr) {
    tape->input = input;
    tape->h_prev = bank.h;
    tape->c_prev = bank.c;
    tape->gate_i = gate_i;
    tape->gate_f = gate_f;
    tape->gate_g = gate_g;
    tape->gate_o = gate_o;
    tape->c_new = c_new;
    tape->tanh_c = tanh_c;
    tape->mlp_pre = mlp_pre;
    tape->out_pre = out_pre;
    tape->out = out;
  }

  bank.h = h_new;
  bank.c = c_new;
  return out;
}

void module_backward(const LstmModuleParams& params, const ModuleTape& tape,
                     const Eigen::MatrixXd& d_out, const Eigen::MatrixXd& d_h_next,
                     const Eigen::MatrixXd& d_c_next, LstmModuleParams& grads,
                     Eigen::MatrixXd& d_input, Eigen::MatrixXd& d_h_prev,
                     Eigen::MatrixXd& d_c_prev) {
  // Output activation. relu uses derivative 0 at the kink.
  Eigen::ArrayXXd d_out_pre;
  if (params.activation == OutputActivation::relu)
    d_out_pre = d_out.array() * (tape.out_pre.array() > 0.0).cast<double>();
  else
    d_out_pre = d_out.array() * tape.out.array();

  const Eigen::MatrixXd relu1 = tape.mlp_pre.cwiseMax(0.0);
  grads.mlp_w2 += d_out_pre.matrix() * relu1.transpose();
  grads.mlp_b2 += d_out_pre.matrix().rowwise().sum();
  Eigen::ArrayXXd d_mlp_pre = (params.mlp_w2.transpose() * d_out_pre.matrix()).array() *
                              (tape.mlp_pre.array() > 0.0).cast<double>();

  const Eigen::MatrixXd h_new = (tape.gate_o.array() * tape.tanh_c.array()).matrix();
  grads.mlp_w1 += d_mlp_pre.matrix() * h_new.transpose();
  grads.mlp_b1 += d_mlp_pre.matrix().rowwise().sum();

  const Eigen::ArrayXXd d_h = (params.mlp_w1.transpose() * d_mlp_pre.matrix() + d_h_next).array();

  const Eigen::ArrayXXd i = tape.gate_i.array();
  const Eigen::ArrayXXd f = tape.gate_f.array();
  const Eigen::ArrayXXd g = tape.gate_g.array();
  const Eigen::ArrayXXd o = tape.gate_o.array();
  const Eigen::ArrayXXd tc = tape.tanh_c.array();

  const Eigen::ArrayXXd d_o = d_h * tc;
  const Eigen::ArrayXXd d_c = d_h * o * (1.0 - tc.square()) + d_c_next.array();
  const Eigen::ArrayXXd d_i = d_c * g;
  const Eigen::ArrayXXd d_g = d_c * i;
  const Eigen::ArrayXXd d_f = d_c * tape.c_prev.array();
  d_c_prev += (d_c * f).matrix();

  const int d = static_cast<int>(tape.input.cols());
  Eigen::MatrixXd d_pre(4 * H, d);
  d_pre.topRows(H) = (d_i * i * (1.0 - i)).matrix();
  d_pre.middleRows(H, H) = (d_f * f * (1.0 - f)).matrix();
  d_pre.middleRows(2 * H, H) = (d_g * (1.0 - g.square())).matrix();
  d_pre.bottomRows(H) = (d_o * o * (1.0 - o)).matrix();

  grads.w_input += d_pre * tape.input.transpose();
  grads.w_hidden += d_pre * tape.h_prev.transpose();
  grads.bias += d_pre.rowwise().sum();
  d_input += params.w_input.transpose() * d_pre;
  d_h_prev += params.w_hidden.transpose() * d_pre;
}

void lstm_cell_forward(const LstmModuleParams& params, const Eigen::VectorXd& input,
                       const Eigen::VectorXd& h, const Eigen::VectorXd& c,
                       Eigen::VectorXd& h_out, Eigen::VectorXd& c_out) {
  if (input.size() != params.in_dim || h.size() != H || c.size() != H)
    throw ShapeError("lstm_cell_forward: shape mismatch");
  const Eigen::ArrayXd pre = (params.w_input * input + params.w_hidden * h + params.bias).array();
  const Eigen::ArrayXd gate_i = 1.0 / (1.0 + (-pre.head(H)).exp());
  const Eigen::ArrayXd gate_f = 1.0 / (1.0 + (-pre.segment(H, H)).exp());
  const Eigen::ArrayXd gate_g = pre.segment(2 * H, H).tanh();
  const Eigen::ArrayXd gate_o = 1.0 / (1.0 + (-pre.tail(H)).exp());
  c_out = (gate_f * c.array() + gate_i * gate_g).matrix();
  h_out = (gate_o * c_out.array().tanh()).matrix();
}

MiLoDoParams init_random(const Topology& topo, std::uint64_t seed) {
  Rng rng(seed);
  MiLoDoParams params;
  params.nodes.reserve(topo.n);
  for (int i = 0; i < topo.n; ++i) {
    const int deg = topo.degree(i);
    NodeParams node;
    node.phi_m = make_module(2, 1, OutputActivation::relu);
    node.phi_s = make_module(deg, deg, OutputActivation::exp);
    node.phi_u = make_module(deg, deg, OutputActivation::relu);
    randomize_module(node.phi_m, rng);
    randomize_module(node.phi_s, rng);
    randomize_module(node.phi_u, rng);
    params.nodes.push_back(std::move(node));
  }
  return params;
}

MiLoDoParams init_special(const Topology& topo, const GossipMatrix& gossip, double gamma,
                          std::uint64_t seed) {
  if (!(gamma > 0.0)) throw ParameterError("init_special: gamma must be positive");
  MiLoDoParams params = init_random(topo, seed);
  for (int i = 0; i < topo.n; ++i) {
    NodeParams& node = params.nodes[i];
    node.phi_m.mlp_w2.setZero();
    node.phi_m.mlp_b2.setConstant(gamma);
    node.phi_s.mlp_w2.setZero();
    node.phi_u.mlp_w2.setZero();
    const auto& nbrs = topo.neighbors[i];
    for (int slot = 0; slot < static_cast<int>(nbrs.size()); ++slot) {
      const double wij = gossip.w(i, nbrs[slot]);
      if (!(wij > 0.0)) throw ParameterError("init_special: zero edge weight");
      node.phi_s.mlp_b2(slot) = std::log(wij / (2.0 * gamma));
      node.phi_u.mlp_b2(slot) = wij / 2.0;
    }
  }
  return params;
}

AdamState AdamState::create(const MiLoDoParams& params, const AdamConfig& cfg) {
  AdamState state;
  state.cfg = cfg;
  state.moment1 = zeros_like(params);
  state.moment2 = zeros_like(params);
  state.t = 0;
  return state;
}

void adam_step(MiLoDoParams& params, const MiLoDoParams& grads, AdamState& state) {
  const auto p_views = tensor_views(params);
  const auto g_views = tensor_views(const_cast<MiLoDoParams&>(grads));
  const auto m_views = tensor_views(state.moment1);
  const auto v_views = tensor_views(state.moment2);
  if (p_views.size() != g_views.size()) throw ShapeError("adam_step: gradient shape mismatch");
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(state.cfg.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < p_views.size(); ++k) {
    if (p_views[k].size != g_views[k].size) throw ShapeError("adam_step: tensor size mismatch");
    Eigen::Map<Eigen::ArrayXd> p(p_views[k].data, p_views[k].size);
    Eigen::Map<const Eigen::ArrayXd> g(g_views[k].data, g_views[k].size);
    Eigen::Map<Eigen::ArrayXd> m(m_views[k].data, m_views[k].size);
    Eigen::Map<Eigen::ArrayXd> v(v_views[k].data, v_views[k].size);
    m = state.cfg.beta1 * m + (1.0 - state.cfg.beta1) * g;
    v = state.cfg.beta2 * v + (1.0 - state.cfg.beta2) * g.square();
    p -= state.cfg.lr * (m / bc1) / ((v / bc2).sqrt() + state.cfg.eps);
  }
}

namespace {

constexpr char kCkptMagic[8] = {'M', 'L', 'D', 'O', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCkptVersion = 1;

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

void write_module_header(std::ostream& out, const LstmModuleParams& m) {
  write_pod<std::int32_t>(out, m.in_dim);
  write_pod<std::int32_t>(out, m.out_dim);
  write_pod<std::uint32_t>(out, m.activation == OutputActivation::relu ? 0 : 1);
}

LstmModuleParams read_module_header(std::istream& in) {
  const int in_dim = read_pod<std::int32_t>(in);
  const int out_dim = read_pod<std::int32_t>(in);
  const auto act = read_pod<std::uint32_t>(in) == 0 ? OutputActivation::relu : OutputActivation::exp;
  if (in_dim <= 0 || out_dim <= 0) throw ParameterError("checkpoint: invalid module dims");
  return make_module(in_dim, out_dim, act);
}

}  // namespace

void save_params_file(const MiLoDoParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParameterError("cannot open for write: " + path);
  out.write(kCkptMagic, sizeof(kCkptMagic));
  write_pod<std::uint32_t>(out, kCkptVersion);
  write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(params.nodes.size()));
  for (const NodeParams& node : params.nodes) {
    write_module_header(out, node.phi_m);
    write_module_header(out, node.phi_s);
    write_module_header(out, node.phi_u);
  }
  for_each_tensor(params, [&](Eigen::Map<const Eigen::VectorXd> t) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  });
  if (!out) throw ParameterError("checkpoint write failed: " + path);
}

MiLoDoParams load_params_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParameterError("cannot open for read: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kCkptMagic, sizeof(magic)) != 0)
    throw ParameterError("not a checkpoint file: " + path);
  if (read_pod<std::uint32_t>(in) != kCkptVersion)
    throw ParameterError("checkpoint version mismatch: " + path);
  const std::uint32_t n = read_pod<std::uint32_t>(in);
  MiLoDoParams params;
  params.nodes.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    NodeParams node;
    node.phi_m = read_module_header(in);
    node.phi_s = read_module_header(in);
    node.phi_u = read_module_header(in);
    params.nodes.push_back(std::move(node));
  }
  for_each_tensor(params, [&](Eigen::Map<Eigen::VectorXd> t) {
    in.read(reinterpret_cast<char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  });
  if (!in) throw ParameterError("checkpoint truncated: " + path);
  return params;
}

}  // namespace milodo
