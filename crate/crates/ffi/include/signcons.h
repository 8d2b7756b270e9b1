#ifndef SIGNCONS_H
#define SIGNCONS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SignconsStatus {
  SIGNCONS_STATUS_OK = 0,
  SIGNCONS_STATUS_NULL_POINTER = 1,
  SIGNCONS_STATUS_INVALID_UTF8 = 2,
  SIGNCONS_STATUS_PARSE = 3,
  SIGNCONS_STATUS_IO = 4,
  SIGNCONS_STATUS_SIMULATION = 5,
  SIGNCONS_STATUS_FILIPPOV = 6,
  SIGNCONS_STATUS_BUFFER_TOO_SMALL = 7,
  SIGNCONS_STATUS_INVALID_ARGUMENT = 8,
  SIGNCONS_STATUS_PANIC = 9,
} SignconsStatus;

typedef enum SignconsPrediction {
  SIGNCONS_PREDICTION_CONSENSUS_GUARANTEED = 0,
  SIGNCONS_PREDICTION_ERROR_CONVERGENCE_GUARANTEED = 1,
  SIGNCONS_PREDICTION_SLIDING_POSSIBLE = 2,
  SIGNCONS_PREDICTION_NO_GUARANTEE = 3,
} SignconsPrediction;

typedef enum SignconsClassKind {
  SIGNCONS_CLASS_KIND_CONSENSUS = 0,
  SIGNCONS_CLASS_KIND_SLIDING_CONSENSUS = 1,
  SIGNCONS_CLASS_KIND_NON_CONSENSUS = 2,
  SIGNCONS_CLASS_KIND_UNDETERMINED = 3,
} SignconsClassKind;

/**
 * Opaque scenario handle.
 */
typedef struct SignconsScenario SignconsScenario;

/**
 * Opaque trajectory handle.
 */
typedef struct SignconsTrajectory SignconsTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of the calling thread into `buf` as a
 * NUL-terminated string, truncating to `len - 1` bytes. Returns the full
 * message length in bytes, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t signcons_last_error(char *buf, size_t len);

/**
 * Parses a scenario from TOML text.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` valid for writing.
 */
enum SignconsStatus signcons_scenario_from_toml(const char *text, struct SignconsScenario **out);

/**
 * Loads a scenario from a TOML file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` valid for writing.
 */
enum SignconsStatus signcons_scenario_load(const char *path, struct SignconsScenario **out);

/**
 * # Safety
 * `s` must be null or a handle from this library not yet freed.
 */
void signcons_scenario_free(struct SignconsScenario *s);

/**
 * Number of agents, or 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
size_t signcons_scenario_dim(const struct SignconsScenario *s);

/**
 * Runs the structural analysis and writes the prediction.
 *
 * # Safety
 * `s` must be a live handle and `out` valid for writing.
 */
enum SignconsStatus signcons_analyze(const struct SignconsScenario *s,
                                     enum SignconsPrediction *out);

/**
 * Writes the analysis report as `key = value` text into `buf`
 * (NUL-terminated). `needed` receives the text length excluding the
 * terminator; if `len` is too small nothing is written and
 * `BufferTooSmall` is returned.
 *
 * # Safety
 * `s` must be a live handle, `buf` null or valid for `len` bytes and
 * `needed` valid for writing.
 */
enum SignconsStatus signcons_analysis_text(const struct SignconsScenario *s,
                                           char *buf,
                                           size_t len,
                                           size_t *needed);

/**
 * Vertices of the Filippov set at `x` (length `n`). Writes the vertex
 * count to `count` and, if `cap >= count * n`, the vertices row by row
 * into `buf`; otherwise returns `BufferTooSmall`.
 *
 * # Safety
 * `s` must be a live handle, `x` valid for `n` reads, `buf` null or valid
 * for `cap` writes and `count` valid for writing.
 */
enum SignconsStatus signcons_filippov_vertices(const struct SignconsScenario *s,
                                               const double *x,
                                               size_t n,
                                               double *buf,
                                               size_t cap,
                                               size_t *count);

/**
 * Simulates the scenario with its own integrator settings.
 *
 * # Safety
 * `s` must be a live handle and `out` valid for writing.
 */
enum SignconsStatus signcons_simulate(const struct SignconsScenario *s,
                                      struct SignconsTrajectory **out);

/**
 * # Safety
 * `t` must be null or a handle from this library not yet freed.
 */
void signcons_trajectory_free(struct SignconsTrajectory *t);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t signcons_trajectory_len(const struct SignconsTrajectory *t);

/**
 * Copies sample times into `buf`, which must hold
 * [`signcons_trajectory_len`] values.
 *
 * # Safety
 * `t` must be a live handle and `buf` valid for `cap` writes.
 */
enum SignconsStatus signcons_trajectory_times(const struct SignconsTrajectory *t,
                                              double *buf,
                                              size_t cap);

/**
 * Copies the state at sample `k` into `buf`, which must hold one value
 * per agent.
 *
 * # Safety
 * `t` must be a live handle and `buf` valid for `cap` writes.
 */
enum SignconsStatus signcons_trajectory_state(const struct SignconsTrajectory *t,
                                              size_t k,
                                              double *buf,
                                              size_t cap);

/**
 * Classification of the run. `value` receives the consensus value or the
 * sliding rate, and NaN for the other kinds.
 *
 * # Safety
 * `t` must be a live handle, `kind` and `value` valid for writing.
 */
enum SignconsStatus signcons_trajectory_classification(const struct SignconsTrajectory *t,
                                                       enum SignconsClassKind *kind,
                                                       double *value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIGNCONS_H */
