#ifndef DSTC_H
#define DSTC_H

#include <stddef.h>
#include <stdint.h>

/**
 * Status codes. Config and Numerical match the CLI exit codes.
 */
typedef enum DstcStatus {
  DSTC_STATUS_OK = 0,
  DSTC_STATUS_NULL_POINTER = 1,
  DSTC_STATUS_CONFIG = 2,
  DSTC_STATUS_NUMERICAL = 3,
  DSTC_STATUS_INVALID_UTF8 = 4,
  DSTC_STATUS_BUFFER_TOO_SMALL = 5,
  DSTC_STATUS_PANIC = 6,
} DstcStatus;

/**
 * A parsed and validated experiment.
 */
typedef struct DstcExperiment DstcExperiment;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds an experiment from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DstcStatus dstc_experiment_from_toml(const char *toml, struct DstcExperiment **out);

/**
 * Builds an experiment from a TOML file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum DstcStatus dstc_experiment_load(const char *path, struct DstcExperiment **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `h` must come from one of the constructors and not be used afterwards.
 */
void dstc_experiment_free(struct DstcExperiment *h);

/**
 * Number of scenarios, which sizes the arrays of the calls below.
 *
 * # Safety
 * `h` must be a live handle and `out` a valid pointer.
 */
enum DstcStatus dstc_scenario_count(const struct DstcExperiment *h, size_t *out);

/**
 * Time of the first reduction. `found` is set to 0 when none happens
 * before the search horizon; `t_c` is left untouched then.
 *
 * # Safety
 * `h` must be a live handle; `t_c` and `found` valid pointers.
 */
enum DstcStatus dstc_critical_time(const struct DstcExperiment *h, double *t_c, int32_t *found);

/**
 * Exact probability that each scenario ends as the sole survivor, in
 * config order. `unresolved` (optional) receives the stalled mass.
 *
 * # Safety
 * `h` must be a live handle; `probs` must hold `len` doubles.
 */
enum DstcStatus dstc_survivor_probabilities(const struct DstcExperiment *h,
                                            double *probs,
                                            size_t len,
                                            double *unresolved);

/**
 * Monte Carlo survivor frequencies over all `trials`, with standard
 * errors. Results depend only on `seed`, not on the thread count.
 *
 * # Safety
 * `h` must be a live handle; `freq` and `errors` must hold `len` doubles.
 */
enum DstcStatus dstc_estimate(const struct DstcExperiment *h,
                              uint64_t trials,
                              uint64_t seed,
                              double *freq,
                              double *errors,
                              size_t len,
                              uint64_t *unresolved);

/**
 * Time-averaged path intensity after an action difference `ds` (in units
 * of ħ) held for `duration`, and its linear approximation.
 *
 * # Safety
 * `numeric` and `linear` must be valid pointers.
 */
enum DstcStatus dstc_path_intensity_drop(double ds,
                                         double duration,
                                         double *numeric,
                                         double *linear);

/**
 * Message of the last failed call on this thread, or null. Valid until
 * the next call on the same thread.
 */
const char *dstc_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DSTC_H */
