#ifndef SCCD_FFI_H
#define SCCD_FFI_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SccdStatus {
  SCCD_STATUS_OK = 0,
  SCCD_STATUS_NULL_POINTER = 1,
  SCCD_STATUS_INVALID_ARGUMENT = 2,
  SCCD_STATUS_GRAPH_DISCONNECTED = 3,
  SCCD_STATUS_SOLVER = 4,
  SCCD_STATUS_IO = 5,
  SCCD_STATUS_PARSE = 6,
  SCCD_STATUS_CONFIG = 7,
  SCCD_STATUS_PANIC = 8,
} SccdStatus;

typedef enum SccdScenario {
  SCCD_SCENARIO_L2 = 0,
  SCCD_SCENARIO_L1 = 1,
} SccdScenario;

typedef enum SccdVariant {
  SCCD_VARIANT_DADMM = 0,
  SCCD_VARIANT_SCCD = 1,
  SCCD_VARIANT_DSCCD = 2,
} SccdVariant;

typedef struct SccdGraph SccdGraph;

typedef struct SccdProblem SccdProblem;

typedef struct SccdSimulation SccdSimulation;

/**
 * Engine parameters. Fill with [`sccd_config_default`] and adjust.
 */
typedef struct SccdConfig {
  enum SccdVariant variant;
  double c;
  double d_prox;
  double c_cmp;
  double co_rat;
  size_t stepsize;
  uint64_t master_seed;
  /**
   * Charge distinct picks instead of draws (0 or 1).
   */
  uint8_t count_distinct;
} SccdConfig;

/**
 * Totals of one synchronous round.
 */
typedef struct SccdRoundInfo {
  size_t round;
  /**
   * Transfers summed over nodes.
   */
  size_t transfers;
  /**
   * Search attempts (`s + 1`) summed over nodes.
   */
  size_t computations;
  double mean_num;
  uint8_t eta_warning;
} SccdRoundInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty when none.
 * Valid until the next failing call on the same thread.
 */
const char *sccd_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sccd_version(void);

/**
 * Connected Erdos-Renyi graph with `n` nodes and edge probability `p`.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum SccdStatus sccd_graph_erdos_renyi(size_t n, double p, uint64_t seed, struct SccdGraph **out);

/**
 * Graph from `edge_count` pairs stored as `edges[2k], edges[2k + 1]`.
 *
 * # Safety
 * `edges` must point to `2 * edge_count` readable values; `out` must be
 * valid for writing one pointer.
 */
enum SccdStatus sccd_graph_from_edges(size_t n,
                                      const size_t *edges,
                                      size_t edge_count,
                                      struct SccdGraph **out);

/**
 * # Safety
 * `graph` must be a live handle; `nodes` and `edges` valid for writes.
 */
enum SccdStatus sccd_graph_size(const struct SccdGraph *graph, size_t *nodes, size_t *edges);

/**
 * Largest Laplacian eigenvalue.
 *
 * # Safety
 * `graph` must be a live handle; `out` valid for writes.
 */
enum SccdStatus sccd_graph_lambda_max(const struct SccdGraph *graph, double *out);

/**
 * # Safety
 * `graph` must be null or a handle not yet freed.
 */
void sccd_graph_free(struct SccdGraph *graph);

/**
 * Synthetic logistic-regression instance with the default recipe for
 * `scenario`. `box_bound` is used by the l1 scenario only.
 *
 * # Safety
 * `out` must be valid for writing one pointer.
 */
enum SccdStatus sccd_problem_synthesize(enum SccdScenario scenario,
                                        size_t nodes,
                                        size_t dim,
                                        size_t samples,
                                        double lambda,
                                        double box_bound,
                                        uint64_t seed,
                                        struct SccdProblem **out);

/**
 * Centralized optimum `obj*` of the pooled problem.
 *
 * # Safety
 * `problem` must be a live handle; `out` valid for writes.
 */
enum SccdStatus sccd_problem_obj_star(const struct SccdProblem *problem, double *out);

/**
 * # Safety
 * `problem` must be null or a handle not yet freed.
 */
void sccd_problem_free(struct SccdProblem *problem);

/**
 * Library defaults for `variant` with penalty `c`.
 */
struct SccdConfig sccd_config_default(enum SccdVariant variant, double c);

/**
 * Simulation of `problem` over `graph`; both handles may be freed
 * afterwards.
 *
 * # Safety
 * All pointers must be live handles or valid structs; `out` valid for
 * writing one pointer.
 */
enum SccdStatus sccd_simulation_new(const struct SccdGraph *graph,
                                    const struct SccdProblem *problem,
                                    const struct SccdConfig *config,
                                    struct SccdSimulation **out);

/**
 * Advances every node by one synchronous round.
 *
 * # Safety
 * `sim` must be a live handle; `info` null or valid for writes.
 */
enum SccdStatus sccd_simulation_step(struct SccdSimulation *sim, struct SccdRoundInfo *info);

/**
 * Relative accuracy and consensus error of the current iterates.
 *
 * # Safety
 * `sim` must be a live handle; `acc` and `cserr` valid for writes.
 */
enum SccdStatus sccd_simulation_metrics(const struct SccdSimulation *sim,
                                        double obj_star,
                                        double *acc,
                                        double *cserr);

/**
 * Copies node `node`'s primal iterate into `buf` (length `len`, which
 * must equal the problem dimension).
 *
 * # Safety
 * `sim` must be a live handle; `buf` valid for `len` writes.
 */
enum SccdStatus sccd_simulation_node_x(const struct SccdSimulation *sim,
                                       size_t node,
                                       double *buf,
                                       size_t len);

/**
 * # Safety
 * `sim` must be null or a handle not yet freed.
 */
void sccd_simulation_free(struct SccdSimulation *sim);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SCCD_FFI_H */
