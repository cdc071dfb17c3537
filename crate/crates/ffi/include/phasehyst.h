#ifndef PHASEHYST_H
#define PHASEHYST_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PhStatus {
  PH_STATUS_OK = 0,
  PH_STATUS_NULL_POINTER = 1,
  PH_STATUS_CONFIG = 2,
  PH_STATUS_NUMERICAL = 3,
  PH_STATUS_NOT_CONVERGED = 4,
  PH_STATUS_INVALID_ARGUMENT = 5,
  PH_STATUS_BUFFER_TOO_SMALL = 6,
  PH_STATUS_PANIC = 7,
} PhStatus;

/*
 A validated model configuration.
 */
typedef struct PhConfig PhConfig;

/*
 Outcome of a periodic-solution search.
 */
typedef struct PhPeriodic PhPeriodic;

/*
 States at every time level of one integration.
 */
typedef struct PhTrajectory PhTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Parses and validates a JSON run configuration (NUL-terminated UTF-8).

 # Safety
 `json` must be a valid C string and `out` a valid pointer.
 */
enum PhStatus ph_config_from_json(const char *json, struct PhConfig **out);

/*
 The reference configuration.

 # Safety
 `out` must be a valid pointer.
 */
enum PhStatus ph_config_canonical(struct PhConfig **out);

/*
 # Safety
 `cfg` must come from a `ph_config_*` constructor and not be used afterwards.
 */
void ph_config_free(struct PhConfig *cfg);

/*
 Writes the 16-character configuration digest.

 # Safety
 `cfg` must be a live handle; `buf` must hold `len` bytes; `needed` may be null.
 */
enum PhStatus ph_config_digest(const struct PhConfig *cfg, char *buf, size_t len, size_t *needed);

/*
 Number of interior grid nodes, 0 for a null handle.

 # Safety
 `cfg` must be null or a live handle.
 */
size_t ph_config_n_interior(const struct PhConfig *cfg);

/*
 Time steps per period, 0 for a null handle.

 # Safety
 `cfg` must be null or a live handle.
 */
size_t ph_config_steps(const struct PhConfig *cfg);

/*
 The dissipativity margin `kappa / C_P - L_*`; NaN for a null handle.

 # Safety
 `cfg` must be null or a live handle.
 */
double ph_config_c0(const struct PhConfig *cfg);

/*
 Integrates one period. Null `u0` or `v0` take the configured initial state;
 otherwise they hold `ph_config_n_interior` values each.

 # Safety
 Pointers must be valid for the sizes above; `out` must be a valid pointer.
 */
enum PhStatus ph_integrate(const struct PhConfig *cfg,
                           const double *u0,
                           const double *v0,
                           struct PhTrajectory **out);

/*
 Number of stored time levels (steps + 1), 0 for a null handle.

 # Safety
 `traj` must be null or a live handle.
 */
size_t ph_trajectory_len(const struct PhTrajectory *traj);

/*
 Copies time level `k` into `t`, `u` and `v`; any of them may be null.

 # Safety
 `u` and `v` must hold `ph_config_n_interior` values when non-null.
 */
enum PhStatus ph_trajectory_state(const struct PhTrajectory *traj,
                                  size_t k,
                                  double *t,
                                  double *u,
                                  double *v);

/*
 # Safety
 `traj` must come from `ph_integrate` and not be used afterwards.
 */
void ph_trajectory_free(struct PhTrajectory *traj);

/*
 Searches for a `T`-periodic state. Null `u0`, `v0` start from the configured
 initial state; `tol <= 0`, `max_iter == 0` and `anderson_window < 0` take the
 configured solver settings. `*out` is also set on `NotConverged`.

 # Safety
 Pointers must be valid as for [`ph_integrate`].
 */
enum PhStatus ph_find_periodic(const struct PhConfig *cfg,
                               const double *u0,
                               const double *v0,
                               double tol,
                               size_t max_iter,
                               int32_t anderson_window,
                               struct PhPeriodic **out);

/*
 Period-map evaluations used, 0 for a null handle.

 # Safety
 `p` must be null or a live handle.
 */
size_t ph_periodic_iterations(const struct PhPeriodic *p);

/*
 Last `|z(T) - z(0)|`, NaN for a null handle.

 # Safety
 `p` must be null or a live handle.
 */
double ph_periodic_residual(const struct PhPeriodic *p);

/*
 1 when the tolerance was reached.

 # Safety
 `p` must be null or a live handle.
 */
int32_t ph_periodic_converged(const struct PhPeriodic *p);

/*
 Copies the periodic state; `u` and `v` hold `ph_config_n_interior` values.

 # Safety
 `p` must be a live handle; `u`, `v` may be null.
 */
enum PhStatus ph_periodic_final_state(const struct PhPeriodic *p, double *u, double *v);

/*
 The full report as JSON.

 # Safety
 As for [`ph_config_digest`].
 */
enum PhStatus ph_periodic_report_json(const struct PhPeriodic *p,
                                      char *buf,
                                      size_t len,
                                      size_t *needed);

/*
 # Safety
 `p` must come from `ph_find_periodic` and not be used afterwards.
 */
void ph_periodic_free(struct PhPeriodic *p);

/*
 Copies the message of the last failed call on this thread.

 # Safety
 As for [`ph_config_digest`].
 */
enum PhStatus ph_last_error_message(char *buf, size_t len, size_t *needed);

/*
 Library version as a static NUL-terminated string.
 */
const char *ph_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PHASEHYST_H */
