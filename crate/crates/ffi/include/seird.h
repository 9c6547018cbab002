#ifndef SEIRD_H
#define SEIRD_H

#include <stddef.h>
#include <stdint.h>

/*
 Result code of every fallible call.
 */
typedef enum SeirdStatus {
  SEIRD_STATUS_OK = 0,
  /*
   A null pointer, bad index or undersized buffer was passed.
   */
  SEIRD_STATUS_INVALID_ARGUMENT = 1,
  /*
   The configuration text or file is malformed or inadmissible.
   */
  SEIRD_STATUS_CONFIG = 2,
  /*
   A linear or Newton solve failed.
   */
  SEIRD_STATUS_SOLVER = 3,
  /*
   A computed quantity left its proven bounds.
   */
  SEIRD_STATUS_INVARIANT = 4,
  /*
   A Rust panic was caught at the boundary.
   */
  SEIRD_STATUS_PANIC = 5,
} SeirdStatus;

/*
 Selects a field of a trajectory.
 */
typedef enum SeirdField {
  SEIRD_FIELD_N = 0,
  SEIRD_FIELD_S = 1,
  SEIRD_FIELD_I = 2,
  SEIRD_FIELD_H = 3,
  /*
   Cumulative deceased density.
   */
  SEIRD_FIELD_D = 4,
} SeirdField;

/*
 Opaque parsed configuration.
 */
typedef struct SeirdConfig SeirdConfig;

/*
 Opaque completed run.
 */
typedef struct SeirdTrajectory SeirdTrajectory;

/*
 A-priori bounds of a run.
 */
typedef struct SeirdBounds {
  double n_up;
  double s_up;
  double h_up;
  double i_up;
  double n_low;
  double kappa_low;
  double kappa_up;
} SeirdBounds;

/*
 Volume integrals of every field at one step.
 */
typedef struct SeirdTotals {
  double n;
  double s;
  double i;
  double h;
  double d;
} SeirdTotals;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Library version as a static NUL-terminated string.
 */
const char *seird_version(void);

/*
 Message for the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call on the same thread.
 */
const char *seird_last_error_message(void);

/*
 Parses configuration text. Raster paths resolve against the working directory.

 # Safety
 `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SeirdStatus seird_config_parse(const char *text, struct SeirdConfig **out);

/*
 Reads and parses a configuration file.

 # Safety
 `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SeirdStatus seird_config_load(const char *path, struct SeirdConfig **out);

/*
 # Safety
 `config` must come from a parse call and not be freed twice. Null is a no-op.
 */
void seird_config_free(struct SeirdConfig *config);

/*
 Writes the canonical text form into `buf` (NUL-terminated) and the
 required size including the terminator into `needed`. A null `buf`
 only queries the size.

 # Safety
 `buf` must hold `len` bytes; `config` and `needed` must be valid.
 */
enum SeirdStatus seird_config_emit(const struct SeirdConfig *config,
                                   char *buf,
                                   size_t len,
                                   size_t *needed);

/*
 Bounds implied by the configured parameters and initial data.

 # Safety
 `config` and `out` must be valid.
 */
enum SeirdStatus seird_config_bounds(const struct SeirdConfig *config, struct SeirdBounds *out);

/*
 1 if `tau` is an admissible step for the rates `alpha`, `mu`, else 0.
 */
int32_t seird_validate_tau(double alpha, double mu, double tau);

/*
 Runs the configured simulation.

 # Safety
 `config` and `out` must be valid.
 */
enum SeirdStatus seird_run(const struct SeirdConfig *config, struct SeirdTrajectory **out);

/*
 # Safety
 `traj` must come from [`seird_run`] and not be freed twice. Null is a no-op.
 */
void seird_trajectory_free(struct SeirdTrajectory *traj);

/*
 Number of time steps; the trajectory holds `steps + 1` states. 0 for null.

 # Safety
 `traj` must be valid or null.
 */
size_t seird_trajectory_num_steps(const struct SeirdTrajectory *traj);

/*
 Number of mesh cells. 0 for null.

 # Safety
 `traj` must be valid or null.
 */
size_t seird_trajectory_num_cells(const struct SeirdTrajectory *traj);

/*
 Copies one field at `step` into `out`, which holds `len` doubles.

 # Safety
 `traj` must be valid and `out` must hold `len` doubles.
 */
enum SeirdStatus seird_trajectory_copy_field(const struct SeirdTrajectory *traj,
                                             size_t step,
                                             enum SeirdField field,
                                             double *out,
                                             size_t len);

/*
 Volume integrals of all fields at `step`.

 # Safety
 `traj` and `out` must be valid.
 */
enum SeirdStatus seird_trajectory_totals(const struct SeirdTrajectory *traj,
                                         size_t step,
                                         struct SeirdTotals *out);

/*
 The bounds ledger the run was checked against.

 # Safety
 `traj` and `out` must be valid.
 */
enum SeirdStatus seird_trajectory_bounds(const struct SeirdTrajectory *traj,
                                         struct SeirdBounds *out);

/*
 Re-checks every state against the ledger and stores the violation count.
 Returns [`SeirdStatus::Invariant`] when any bound is violated.

 # Safety
 `traj` and `violations` must be valid.
 */
enum SeirdStatus seird_trajectory_verify_bounds(const struct SeirdTrajectory *traj,
                                                size_t *violations);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEIRD_H */
