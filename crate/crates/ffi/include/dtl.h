#ifndef DTL_H
#define DTL_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DtlStatus {
  DTL_STATUS_OK = 0,
  DTL_STATUS_NULL_POINTER = 1,
  DTL_STATUS_INVALID_ARGUMENT = 2,
  DTL_STATUS_INVALID_MODEL = 3,
  DTL_STATUS_ASSUMPTION = 4,
  DTL_STATUS_NUMERICAL = 5,
  DTL_STATUS_IO = 6,
  DTL_STATUS_BUFFER_TOO_SMALL = 7,
  DTL_STATUS_PANIC = 8,
} DtlStatus;

typedef enum DtlAlgo {
  DTL_ALGO_SEMI_GRADIENT = 0,
  DTL_ALGO_TARGET = 1,
  DTL_ALGO_TARGET_TRUNC = 2,
  DTL_ALGO_TARGET_PROJ = 3,
} DtlAlgo;

/**
 * Opaque environment handle.
 */
typedef struct DtlEnv DtlEnv;

/**
 * Opaque run-log handle.
 */
typedef struct DtlRunLog DtlRunLog;

/**
 * Run parameters. Start from [`dtl_run_config_default`].
 */
typedef struct DtlRunConfig {
  /**
   * A `DtlAlgo` value, kept as an integer so foreign code cannot smuggle
   * in an invalid enum.
   */
  uint32_t algo;
  size_t outer;
  size_t inner;
  double alpha;
  /**
   * Truncation radius; NaN selects the environment default.
   */
  double radius;
  uint64_t seed;
  double divergence_guard;
  size_t log_every;
} DtlRunConfig;

typedef struct DtlRecord {
  size_t t;
  uint64_t samples;
  double sup_error;
  double theta_norm;
  bool diverged;
} DtlRecord;

typedef struct DtlBoundInputs {
  double gamma;
  size_t outer;
  size_t inner;
  double alpha;
  size_t t_alpha;
  double lambda_min;
  double e_approx;
  double init_gap;
} DtlBoundInputs;

typedef struct DtlBoundTerms {
  double e1;
  double e2;
  double e3;
  double e4;
  double total;
  bool stepsize_warning;
} DtlBoundTerms;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into the library from the same thread.
 */
const char *dtl_last_error(void);

/**
 * Static, NUL-terminated crate version.
 */
const char *dtl_version(void);

/**
 * Builds a named environment: `baird`, `example1`, `random:SEED:S:A`,
 * `uniform:SEED:S:A`, or a path to an MDP JSON file. A NaN `gamma` keeps
 * the file's discount and is rejected for built-ins.
 *
 * # Safety
 * `name` must be a valid C string and `out` a writable pointer.
 */
enum DtlStatus dtl_env_new(const char *name, double gamma, struct DtlEnv **out);

/**
 * Builds an environment from MDP JSON text (`n_states`, `n_actions`,
 * `gamma`, `rewards`, `transitions`) with a uniform behavior policy and
 * tabular features.
 *
 * # Safety
 * `json` must be a valid C string and `out` a writable pointer.
 */
enum DtlStatus dtl_env_from_json(const char *json, struct DtlEnv **out);

/**
 * # Safety
 * `env` must come from a constructor above and not be used afterwards.
 */
void dtl_env_free(struct DtlEnv *env);

/**
 * Writes the number of states, actions and features.
 *
 * # Safety
 * All pointers must be valid.
 */
enum DtlStatus dtl_env_dims(const struct DtlEnv *env,
                            size_t *n_states,
                            size_t *n_actions,
                            size_t *dim);

/**
 * Copies `Q*` indexed by `s * n_actions + a`.
 *
 * # Safety
 * `env` and `needed` must be valid; `out` must hold `len` doubles.
 */
enum DtlStatus dtl_env_q_star(const struct DtlEnv *env, double *out, size_t len, size_t *needed);

/**
 * Defaults: target network with truncation, `T = 50`, `K = 1000`,
 * `alpha = 0.01`, environment radius, seed 0, guard `1e8`, log every step.
 */
struct DtlRunConfig dtl_run_config_default(void);

/**
 * Runs one seed. Divergence is reported in the log, not as an error.
 *
 * # Safety
 * `env` and `cfg` must be valid; `out` must be writable.
 */
enum DtlStatus dtl_run(const struct DtlEnv *env,
                       const struct DtlRunConfig *cfg,
                       struct DtlRunLog **out);

/**
 * # Safety
 * `log` must come from [`dtl_run`] and not be used afterwards.
 */
void dtl_runlog_free(struct DtlRunLog *log);

/**
 * Number of logged records, excluding the initial point.
 *
 * # Safety
 * `log` must be valid or null (null yields 0).
 */
size_t dtl_runlog_len(const struct DtlRunLog *log);

/**
 * # Safety
 * `log` must be valid or null (null yields false).
 */
bool dtl_runlog_diverged(const struct DtlRunLog *log);

/**
 * Record `index`; index 0 is the first logged outer step.
 *
 * # Safety
 * `log` and `out` must be valid.
 */
enum DtlStatus dtl_runlog_record(const struct DtlRunLog *log, size_t index, struct DtlRecord *out);

/**
 * Copies the final parameter vector.
 *
 * # Safety
 * `log` and `needed` must be valid; `out` must hold `len` doubles.
 */
enum DtlStatus dtl_runlog_theta(const struct DtlRunLog *log,
                                double *out,
                                size_t len,
                                size_t *needed);

/**
 * Evaluates the four-term finite-sample error bound.
 *
 * # Safety
 * Both pointers must be valid.
 */
enum DtlStatus dtl_error_bound(const struct DtlBoundInputs *inputs, struct DtlBoundTerms *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DTL_H */
