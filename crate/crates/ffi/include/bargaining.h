#ifndef BARGAINING_H
#define BARGAINING_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BgStatus {
  BG_STATUS_OK = 0,
  BG_STATUS_NULL_POINTER = 1,
  BG_STATUS_INVALID_UTF8 = 2,
  BG_STATUS_PARSE = 3,
  BG_STATUS_INVALID_INSTANCE = 4,
  BG_STATUS_INVALID_CONFIG = 5,
  BG_STATUS_NO_CONVERGENCE = 6,
  BG_STATUS_BUFFER_TOO_SMALL = 7,
  BG_STATUS_INTERNAL = 8,
  BG_STATUS_PANIC = 9,
} BgStatus;

/**
 * Parsed, validated instance.
 */
typedef struct BgInstance BgInstance;

/**
 * Final state of a dynamics run.
 */
typedef struct BgState BgState;

typedef struct BgRunConfig {
  double kappa;
  /**
   * Stop once the step change is at most `kappa * eps_conv`.
   */
  double eps_conv;
  uint64_t max_iters;
} BgRunConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into the library on this thread.
 */
const char *bg_last_error_message(void);

/**
 * Parses an instance document (`{"nodes": n, "edges": [{u, v, w}, ...]}`).
 *
 * # Safety
 * `json` must be a valid NUL-terminated string; `out_instance` must be
 * writable.
 */
enum BgStatus bg_instance_from_json(const char *json, struct BgInstance **out_instance);

/**
 * # Safety
 * `instance` must come from [`bg_instance_from_json`] and not be freed
 * twice. Null is ignored.
 */
void bg_instance_free(struct BgInstance *instance);

/**
 * # Safety
 * Pointers must be valid or null.
 */
enum BgStatus bg_instance_node_count(const struct BgInstance *instance, size_t *out_count);

/**
 * # Safety
 * Pointers must be valid or null.
 */
enum BgStatus bg_instance_edge_count(const struct BgInstance *instance, size_t *out_count);

/**
 * Number of directed messages, twice the edge count. Arc `2e` runs from
 * the lower to the higher endpoint of edge `e`, arc `2e + 1` back.
 *
 * # Safety
 * Pointers must be valid or null.
 */
enum BgStatus bg_instance_arc_count(const struct BgInstance *instance, size_t *out_count);

/**
 * # Safety
 * Pointers must be valid or null.
 */
enum BgStatus bg_instance_max_weight(const struct BgInstance *instance, double *out_weight);

struct BgRunConfig bg_run_config_default(void);

/**
 * Runs the dynamics. `init_alpha` may be null for the zero vector;
 * otherwise it holds `init_len` values, one per arc. A run that hits
 * `max_iters` still returns `BG_STATUS_OK`; check
 * [`bg_state_converged`].
 *
 * # Safety
 * `instance` and `config` must be valid; `init_alpha` must point to
 * `init_len` doubles when non-null; `out_state` must be writable.
 */
enum BgStatus bg_run(const struct BgInstance *instance,
                     const struct BgRunConfig *config,
                     const double *init_alpha,
                     size_t init_len,
                     struct BgState **out_state);

/**
 * # Safety
 * `state` must come from [`bg_run`] and not be freed twice. Null is
 * ignored.
 */
void bg_state_free(struct BgState *state);

/**
 * # Safety
 * Pointers must be valid or null.
 */
enum BgStatus bg_state_converged(const struct BgState *state, bool *out_converged);

/**
 * # Safety
 * Pointers must be valid or null.
 */
enum BgStatus bg_state_iterations(const struct BgState *state, uint64_t *out_iterations);

/**
 * Copies the node earnings into `buf`. The required length is written
 * to `out_needed` (if non-null) even when the buffer is too small.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum BgStatus bg_state_earnings(const struct BgState *state,
                                double *buf,
                                size_t len,
                                size_t *out_needed);

/**
 * Copies the message vector (one value per arc) into `buf`.
 *
 * # Safety
 * `buf` must hold `len` doubles.
 */
enum BgStatus bg_state_alpha(const struct BgState *state,
                             double *buf,
                             size_t len,
                             size_t *out_needed);

/**
 * Runs the verification pipeline with default settings and returns the
 * report as a JSON string, to be released with [`bg_string_free`].
 *
 * # Safety
 * `instance` must be valid; out pointers must be writable.
 */
enum BgStatus bg_verify_json(const struct BgInstance *instance, char **out_json, bool *out_passed);

/**
 * # Safety
 * `s` must come from this library and not be freed twice. Null is
 * ignored.
 */
void bg_string_free(char *s);

/**
 * Offer `(w - a_ij)_+ - ½(w - a_ij - a_ji)_+` on one edge.
 */
double bg_compute_offer(double w, double a_ij, double a_ji);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BARGAINING_H */
