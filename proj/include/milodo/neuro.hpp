#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "milodo/graph.hpp"

namespace milodo {

inline constexpr int kLstmHidden = 20;

enum class OutputActivation { relu, exp };

// One coordinate-wise module: a single LSTM cell followed by a 2-layer MLP
// (internal relu) and the output activation. The same parameters are applied
// independently to every coordinate.
struct LstmModuleParams {
  int in_dim = 0;
  int out_dim = 0;
  OutputActivation activation = OutputActivation::relu;
  // Gate order within the 4H rows: input, forget, candidate, output.
  Eigen::MatrixXd w_input;   // 4H x in_dim
  Eigen::MatrixXd w_hidden;  // 4H x H
  Eigen::VectorXd bias;      // 4H
  Eigen::MatrixXd mlp_w1;    // H x H
  Eigen::VectorXd mlp_b1;    // H
  Eigen::MatrixXd mlp_w2;    // out_dim x H
  Eigen::VectorXd mlp_b2;    // out_dim
};

struct NodeParams {
  LstmModuleParams phi_m;  // step sizes p_i, relu
  LstmModuleParams phi_s;  // dual mixing weights, exp
  LstmModuleParams phi_u;  // primal mixing weights, relu
};

struct MiLoDoParams {
  std::vector<NodeParams> nodes;
};

// Visits every parameter tensor as a flat double span, in declaration order.
// Used by Adam, checkpoint IO and the finite-difference harness.
void for_each_tensor(MiLoDoParams& params,
                     const std::function<void(Eigen::Map<Eigen::VectorXd>)>& fn);
void for_each_tensor(const MiLoDoParams& params,
                     const std::function<void(Eigen::Map<const Eigen::VectorXd>)>& fn);
MiLoDoParams zeros_like(const MiLoDoParams& params);
std::size_t parameter_count(const MiLoDoParams& params);

// Flat view in for_each_tensor order; unflatten requires a matching length.
Eigen::VectorXd flatten(const MiLoDoParams& params);
void unflatten(const Eigen::VectorXd& flat, MiLoDoParams& params);

// Per-coordinate hidden/cell bank, one column per coordinate.
struct LstmBank {
  Eigen::MatrixXd h;  // H x d
  Eigen::MatrixXd c;  // H x d
};

struct HiddenState {
  LstmBank m, s, u;
};

// Saved forward activations of one module application, enough for the
// analytic reverse pass.
struct ModuleTape {
  Eigen::MatrixXd input;   // in_dim x d
  Eigen::MatrixXd h_prev;  // H x d
  Eigen::MatrixXd c_prev;  // H x d
  Eigen::MatrixXd gate_i, gate_f, gate_g, gate_o;  // H x d, post-activation
  Eigen::MatrixXd c_new;    // H x d
  Eigen::MatrixXd tanh_c;   // H x d
  Eigen::MatrixXd mlp_pre;  // H x d, before the internal relu
  Eigen::MatrixXd out_pre;  // out_dim x d, before the output activation
  Eigen::MatrixXd out;      // out_dim x d
};

// Applies the module to all coordinates at once (columns of `input`); updates
// the bank in place. Pass a tape to save activations for module_backward.
Eigen::MatrixXd module_forward(const LstmModuleParams& params, const Eigen::MatrixXd& input,
                               LstmBank& bank, ModuleTape* tape = nullptr);

// Reverse pass of module_forward. d_out is the adjoint of the module output;
// d_h_next / d_c_next are adjoints flowing back from the next time step's use
// of the updated bank. Accumulates into grads and the input/state adjoints.
void module_backward(const LstmModuleParams& params, const ModuleTape& tape,
                     const Eigen::MatrixXd& d_out, const Eigen::MatrixXd& d_h_next,
                     const Eigen::MatrixXd& d_c_next, LstmModuleParams& grads,
                     Eigen::MatrixXd& d_input, Eigen::MatrixXd& d_h_prev,
                     Eigen::MatrixXd& d_c_prev);

// Single-coordinate LSTM cell step, shared with the vectorized path.
void lstm_cell_forward(const LstmModuleParams& params, const Eigen::VectorXd& input,
                       const Eigen::VectorXd& h, const Eigen::VectorXd& c,
                       Eigen::VectorXd& h_out, Eigen::VectorXd& c_out);

MiLoDoParams init_random(const Topology& topo, std::uint64_t seed);

// Random init, then final affine layers overwritten so the step-0 behavior
// equals Exact-Diffusion with gossip matrix W and step gamma.
MiLoDoParams init_special(const Topology& topo, const GossipMatrix& gossip, double gamma,
                          std::uint64_t seed = 0);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig cfg;
  MiLoDoParams moment1;
  MiLoDoParams moment2;
  long long t = 0;

  static AdamState create(const MiLoDoParams& params, const AdamConfig& cfg);
};

void adam_step(MiLoDoParams& params, const MiLoDoParams& grads, AdamState& state);

// Versioned binary checkpoint; save/load round-trips bitwise.
void save_params_file(const MiLoDoParams& params, const std::string& path);
MiLoDoParams load_params_file(const std::string& path);

}  // namespace milodo
