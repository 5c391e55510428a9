#ifndef ELLATT_H
#define ELLATT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum EllattStatus {
  ELLATT_STATUS_OK = 0,
  ELLATT_STATUS_NULL_POINTER = 1,
  ELLATT_STATUS_INVALID_ARGUMENT = 2,
  ELLATT_STATUS_CONFIG_ERROR = 3,
  ELLATT_STATUS_NUMERICAL_ERROR = 4,
  ELLATT_STATUS_IO_ERROR = 5,
  ELLATT_STATUS_OUT_OF_RANGE = 6,
  ELLATT_STATUS_PANIC = 7,
} EllattStatus;

typedef enum EllattFormat {
  ELLATT_FORMAT_CSV = 0,
  ELLATT_FORMAT_JSON = 1,
} EllattFormat;

/**
 * Gravity model selector for [`ellatt_filter_new`].
 */
typedef enum EllattPotential {
  ELLATT_POTENTIAL_FREE_BODY = 0,
  ELLATT_POTENTIAL_GRAVITY_GRADIENT = 1,
} EllattPotential;

/**
 * Opaque running filter: estimator plus the current ellipsoid and time.
 */
typedef struct EllattFilter EllattFilter;

/**
 * Opaque validated scenario.
 */
typedef struct EllattScenario EllattScenario;

/**
 * Opaque list of trace records.
 */
typedef struct EllattTrace EllattTrace;

/**
 * One trace row. Missing values are `-1` for `dir_idx` and NaN for floats.
 */
typedef struct EllattRecord {
  uint64_t k;
  double t;
  double att_err_deg;
  double rate_err;
  double trace_p;
  bool membership;
  int64_t dir_idx;
  double theta0;
  double r_star;
  bool beta_flag;
  double truth_attitude[9];
  double truth_rate[3];
  double est_attitude[9];
  double est_rate[3];
} EllattRecord;

/**
 * Outcome of one [`ellatt_filter_step`]. `r_star` and `beta` are NaN when
 * the intersection was empty.
 */
typedef struct EllattStepReport {
  double time;
  double theta0;
  bool theta_degenerate;
  double r_star;
  double beta;
  bool fusion_inconsistent;
  bool fusion_applied;
  double trace_predicted;
  double trace_posterior;
} EllattStepReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null if none. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *ellatt_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ellatt_version(void);

/**
 * `R = exp(hat(v))`.
 *
 * # Safety
 * `v` must point to 3 doubles and `r_out` to 9 writable doubles.
 */
enum EllattStatus ellatt_so3_exp(const double *v, double *r_out);

/**
 * `v = vee(log R)` for a rotation with angle below π.
 *
 * # Safety
 * `r` must point to 9 doubles and `v_out` to 3 writable doubles.
 */
enum EllattStatus ellatt_so3_log(const double *r, double *v_out);

/**
 * The bundled spacecraft scenario.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum EllattStatus ellatt_scenario_paper(struct EllattScenario **out);

/**
 * Parses a scenario from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid handle slot.
 */
enum EllattStatus ellatt_scenario_from_json(const char *json, struct EllattScenario **out);

/**
 * Loads a scenario file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid handle slot.
 */
enum EllattStatus ellatt_scenario_load(const char *path, struct EllattScenario **out);

/**
 * # Safety
 * `scenario` must be a live handle.
 */
enum EllattStatus ellatt_scenario_set_seed(struct EllattScenario *scenario, uint64_t seed);

/**
 * Runs the closed loop and returns the trace as a new handle.
 *
 * # Safety
 * `scenario` must be a live handle and `out` a valid handle slot.
 */
enum EllattStatus ellatt_scenario_run(const struct EllattScenario *scenario,
                                      struct EllattTrace **out);

/**
 * # Safety
 * `scenario` must be null or a handle not yet freed.
 */
void ellatt_scenario_free(struct EllattScenario *scenario);

/**
 * Number of records, or 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t ellatt_trace_len(const struct EllattTrace *trace);

/**
 * Copies record `index` into `out`.
 *
 * # Safety
 * `trace` must be a live handle and `out` a valid pointer.
 */
enum EllattStatus ellatt_trace_record(const struct EllattTrace *trace,
                                      size_t index,
                                      struct EllattRecord *out);

/**
 * Writes the trace as CSV or JSON.
 *
 * # Safety
 * `trace` must be a live handle and `path` a NUL-terminated string.
 */
enum EllattStatus ellatt_trace_write(const struct EllattTrace *trace,
                                     const char *path,
                                     enum EllattFormat format);

/**
 * # Safety
 * `trace` must be null or a handle not yet freed.
 */
void ellatt_trace_free(struct EllattTrace *trace);

/**
 * Creates a filter from an initial ellipsoid.
 *
 * `inertia` holds the 3 principal moments, `attitude` a row-major rotation,
 * `rate` the center angular velocity and `shape` the row-major 6×6 matrix.
 *
 * # Safety
 * Array pointers must reference the stated number of doubles and `out` a
 * valid handle slot.
 */
enum EllattStatus ellatt_filter_new(const double *inertia,
                                    enum EllattPotential potential,
                                    double step,
                                    size_t steps_between_measurements,
                                    const double *attitude,
                                    const double *rate,
                                    const double *shape,
                                    double time,
                                    struct EllattFilter **out);

/**
 * Propagates to the next measurement instant and fuses one direction
 * measurement: `reference` is the known inertial direction, `measured` its
 * observation in the body frame and `noise` the row-major bound `S`.
 *
 * # Safety
 * `filter` must be a live handle; array pointers must reference the stated
 * number of doubles; `report` may be null.
 */
enum EllattStatus ellatt_filter_step(struct EllattFilter *filter,
                                     const double *reference,
                                     const double *measured,
                                     const double *noise,
                                     struct EllattStepReport *report);

/**
 * Copies the current ellipsoid out. Any output pointer may be null.
 *
 * # Safety
 * `filter` must be a live handle; non-null outputs must hold 9, 3, 36 and
 * 1 doubles respectively.
 */
enum EllattStatus ellatt_filter_state(const struct EllattFilter *filter,
                                      double *attitude,
                                      double *rate,
                                      double *shape,
                                      double *time);

/**
 * # Safety
 * `filter` must be null or a handle not yet freed.
 */
void ellatt_filter_free(struct EllattFilter *filter);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ELLATT_H */
