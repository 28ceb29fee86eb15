#include "milodo/capi.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "milodo/errors.hpp"
#include "milodo/graph.hpp"
#include "milodo/harness.hpp"
#include "milodo/neuro.hpp"
#include "milodo/problems.hpp"

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out != nullptr) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
milodo_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    fn();
    return MILODO_OK;
  } catch (const milodo::ParameterError& e) {
    g_last_error = e.what();
    return MILODO_ERR_CONFIG;
  } catch (const milodo::ShapeError& e) {
    g_last_error = e.what();
    return MILODO_ERR_CONFIG;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MILODO_ERR_RUNTIME;
  }
}

int run_cmd(int (*cmd)(const std::string&, std::string&), const char* config_json,
            char** report) {
  g_last_error.clear();
  if (config_json == nullptr) {
    g_last_error = "config_json is null";
    return MILODO_ERR_CONFIG;
  }
  std::string rep;
  const int code = cmd(config_json, rep);
  if (code != 0) g_last_error = rep;
  if (report != nullptr) *report = dup_string(rep);
  return code;
}

}  // namespace

struct milodo_topology_s {
  milodo::Topology value;
};
struct milodo_optimizee_s {
  milodo::Optimizee value;
};
struct milodo_params_s {
  milodo::MiLoDoParams value;
};

extern "C" {

const char* milodo_last_error(void) { return g_last_error.c_str(); }

milodo_status milodo_topology_load(const char* path, milodo_topology** out) {
  if (path == nullptr || out == nullptr) {
    g_last_error = "null argument";
    return MILODO_ERR_CONFIG;
  }
  return guarded([&] { *out = new milodo_topology_s{milodo::load_topology_file(path)}; });
}

void milodo_topology_free(milodo_topology* topo) { delete topo; }

int milodo_topology_nodes(const milodo_topology* topo) {
  return topo != nullptr ? topo->value.n : 0;
}

int milodo_topology_edge_count(const milodo_topology* topo) {
  return topo != nullptr ? static_cast<int>(topo->value.edges.size()) : 0;
}

milodo_status milodo_optimizee_load(const char* path, milodo_optimizee** out) {
  if (path == nullptr || out == nullptr) {
    g_last_error = "null argument";
    return MILODO_ERR_CONFIG;
  }
  return guarded([&] { *out = new milodo_optimizee_s{milodo::load_optimizee_file(path)}; });
}

void milodo_optimizee_free(milodo_optimizee* opt) { delete opt; }

int milodo_optimizee_dimension(const milodo_optimizee* opt) {
  return opt != nullptr ? opt->value.shape.d : 0;
}

milodo_status milodo_optimizee_objective(const milodo_optimizee* opt, const double* x,
                                         size_t d, double* value) {
  if (opt == nullptr || x == nullptr || value == nullptr) {
    g_last_error = "null argument";
    return MILODO_ERR_CONFIG;
  }
  return guarded([&] {
    if (static_cast<int>(d) != opt->value.shape.d)
      throw milodo::ShapeError("objective: dimension mismatch");
    const Eigen::Map<const Eigen::VectorXd> xv(x, static_cast<Eigen::Index>(d));
    *value = milodo::global_objective(opt->value, xv);
  });
}

milodo_status milodo_params_load(const char* path, milodo_params** out) {
  if (path == nullptr || out == nullptr) {
    g_last_error = "null argument";
    return MILODO_ERR_CONFIG;
  }
  return guarded([&] { *out = new milodo_params_s{milodo::load_params_file(path)}; });
}

void milodo_params_free(milodo_params* params) { delete params; }

size_t milodo_params_count(const milodo_params* params) {
  return params != nullptr ? milodo::parameter_count(params->value) : 0;
}

int milodo_cmd_gen_data(const char* config_json, char** report) {
  return run_cmd(milodo::cmd_gen_data, config_json, report);
}

int milodo_cmd_train(const char* config_json, char** report) {
  return run_cmd(milodo::cmd_train, config_json, report);
}

int milodo_cmd_eval(const char* config_json, char** report) {
  return run_cmd(milodo::cmd_eval, config_json, report);
}

int milodo_cmd_verify(const char* config_json, char** report) {
  return run_cmd(milodo::cmd_verify, config_json, report);
}

milodo_status milodo_apply_overrides(const char* config_json, const uint64_t* seed,
                                     const int* threads, const char* precision,
                                     const char* out_dir, char** merged) {
  if (config_json == nullptr || merged == nullptr) {
    g_last_error = "null argument";
    return MILODO_ERR_CONFIG;
  }
  return guarded([&] {
    milodo::CliOverrides ov;
    if (seed != nullptr) ov.seed = *seed;
    if (threads != nullptr) ov.threads = *threads;
    if (precision != nullptr) ov.precision = precision;
    if (out_dir != nullptr) ov.out = out_dir;
    *merged = dup_string(milodo::apply_overrides(config_json, ov));
  });
}

void milodo_string_free(char* s) { std::free(s); }

}  // extern "C"
