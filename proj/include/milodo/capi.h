#ifndef MILODO_CAPI_H
#define MILODO_CAPI_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes shared by every call: 0 success, 1 runtime/property failure,
 * 2 invalid configuration or parameters. */
typedef enum {
  MILODO_OK = 0,
  MILODO_ERR_RUNTIME = 1,
  MILODO_ERR_CONFIG = 2
} milodo_status;

/* Message of the last failing call on this thread; empty string otherwise.
 * The pointer stays valid until the next API call on the same thread. */
const char* milodo_last_error(void);

/* Opaque handles. Every *_load allocates; pair with the matching *_free. */
typedef struct milodo_topology_s milodo_topology;
typedef struct milodo_optimizee_s milodo_optimizee;
typedef struct milodo_params_s milodo_params;

milodo_status milodo_topology_load(const char* path, milodo_topology** out);
void milodo_topology_free(milodo_topology* topo);
int milodo_topology_nodes(const milodo_topology* topo);
int milodo_topology_edge_count(const milodo_topology* topo);

milodo_status milodo_optimizee_load(const char* path, milodo_optimizee** out);
void milodo_optimizee_free(milodo_optimizee* opt);
int milodo_optimizee_dimension(const milodo_optimizee* opt);
/* Global objective f(x) + r(x) at a length-d point. */
milodo_status milodo_optimizee_objective(const milodo_optimizee* opt, const double* x,
                                         size_t d, double* value);

milodo_status milodo_params_load(const char* path, milodo_params** out);
void milodo_params_free(milodo_params* params);
size_t milodo_params_count(const milodo_params* params);

/* Commands. config_json is a schema-1 JSON document; *report (optional)
 * receives a heap-allocated human-readable report, released with
 * milodo_string_free. The return value is the process exit code contract:
 * 0 success, 1 property/convergence failure, 2 config error. */
int milodo_cmd_gen_data(const char* config_json, char** report);
int milodo_cmd_train(const char* config_json, char** report);
int milodo_cmd_eval(const char* config_json, char** report);
int milodo_cmd_verify(const char* config_json, char** report);

/* Merges command-line overrides into a config document. Null pointers leave
 * the corresponding key untouched. *merged is heap-allocated JSON. */
milodo_status milodo_apply_overrides(const char* config_json, const uint64_t* seed,
                                     const int* threads, const char* precision,
                                     const char* out_dir, char** merged);

void milodo_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* MILODO_CAPI_H */
