#ifndef DCSIM_H
#define DCSIM_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum DcsimStatus {
  DCSIM_STATUS_OK = 0,
  DCSIM_STATUS_NULL_POINTER = 1,
  DCSIM_STATUS_INVALID_ARGUMENT = 2,
  DCSIM_STATUS_CONFIG = 3,
  DCSIM_STATUS_PARSE = 4,
  DCSIM_STATUS_SCENARIO = 5,
  DCSIM_STATUS_CONSERVATION = 6,
  DCSIM_STATUS_IO = 7,
  DCSIM_STATUS_UNKNOWN_METRIC = 8,
  DCSIM_STATUS_INTERNAL = 9,
} DcsimStatus;

/**
 * Mobility scheme.
 */
typedef enum DcsimMode {
  DCSIM_MODE_DC = 0,
  DCSIM_MODE_HH = 1,
} DcsimMode;

/**
 * Aggregated metrics of an experiment (one configuration, one or two modes).
 */
typedef struct DcsimExperiment DcsimExperiment;

/**
 * Simulation parameters.
 */
typedef struct DcsimParams DcsimParams;

/**
 * Metrics of one completed run.
 */
typedef struct DcsimRun DcsimRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *dcsim_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *dcsim_version(void);

/**
 * Default parameters. Never null.
 */
struct DcsimParams *dcsim_params_new(void);

/**
 * Loads parameters from a TOML configuration file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum DcsimStatus dcsim_params_load(const char *path, struct DcsimParams **out);

/**
 * # Safety
 * `params` must be null or a handle from this library not yet freed.
 */
void dcsim_params_free(struct DcsimParams *params);

/**
 * # Safety
 * `params` must be a live handle from this library.
 */
enum DcsimStatus dcsim_params_set_mode(struct DcsimParams *params, enum DcsimMode mode);

/**
 * # Safety
 * `params` must be a live handle from this library.
 */
enum DcsimStatus dcsim_params_set_seed(struct DcsimParams *params, uint64_t seed);

/**
 * # Safety
 * `params` must be a live handle from this library.
 */
enum DcsimStatus dcsim_params_set_runs(struct DcsimParams *params, uint32_t runs);

/**
 * # Safety
 * `params` must be a live handle from this library.
 */
enum DcsimStatus dcsim_params_set_x2_latency_ms(struct DcsimParams *params, double ms);

/**
 * # Safety
 * `params` must be a live handle from this library.
 */
enum DcsimStatus dcsim_params_set_ue_speed(struct DcsimParams *params, double speed);

/**
 * Run length in seconds; 0 restores the default (time to cover the UE path).
 *
 * # Safety
 * `params` must be a live handle from this library.
 */
enum DcsimStatus dcsim_params_set_duration_s(struct DcsimParams *params, double secs);

/**
 * Runs replication `run_index` (seeded from the master seed) in the
 * parameters' mode.
 *
 * # Safety
 * `params` must be a live handle and `out` a valid pointer.
 */
enum DcsimStatus dcsim_run(const struct DcsimParams *params,
                           uint32_t run_index,
                           struct DcsimRun **out);

/**
 * Reads a scalar metric by name (e.g. `mean_latency_ms`).
 *
 * # Safety
 * `run` must be a live handle, `name` a valid NUL-terminated string and
 * `value` a valid pointer.
 */
enum DcsimStatus dcsim_run_metric(const struct DcsimRun *run, const char *name, double *value);

/**
 * # Safety
 * `run` must be null or a handle from this library not yet freed.
 */
void dcsim_run_free(struct DcsimRun *run);

/**
 * Runs all replications of the configuration, in both modes when `paired`
 * is nonzero, writing per-run files under `out_dir` unless it is null.
 *
 * # Safety
 * `params` must be a live handle, `out_dir` null or a valid NUL-terminated
 * string, and `out` a valid pointer.
 */
enum DcsimStatus dcsim_experiment_run(const struct DcsimParams *params,
                                      int32_t paired,
                                      const char *out_dir,
                                      struct DcsimExperiment **out);

/**
 * Mean and sample standard deviation of a metric over the runs of `mode`.
 * Either output pointer may be null.
 *
 * # Safety
 * `exp` must be a live handle, `name` a valid NUL-terminated string, and
 * `mean`/`stddev` null or valid pointers.
 */
enum DcsimStatus dcsim_experiment_metric(const struct DcsimExperiment *exp,
                                         enum DcsimMode mode,
                                         const char *name,
                                         double *mean,
                                         double *stddev);

/**
 * Number of runs per mode in the experiment, or 0 for a null handle.
 *
 * # Safety
 * `exp` must be null or a live handle.
 */
uint32_t dcsim_experiment_runs(const struct DcsimExperiment *exp);

/**
 * # Safety
 * `exp` must be null or a handle from this library not yet freed.
 */
void dcsim_experiment_free(struct DcsimExperiment *exp);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DCSIM_H */
