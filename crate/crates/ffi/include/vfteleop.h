/* SPDX-License-Identifier: Apache-2.0 */

#ifndef VFTELEOP_H
#define VFTELEOP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum VftStatus {
  VFT_STATUS_OK = 0,
  VFT_STATUS_NULL_POINTER = 1,
  VFT_STATUS_INVALID_ARGUMENT = 2,
  VFT_STATUS_DIMENSION = 3,
  VFT_STATUS_SIMULATION_FAULT = 4,
  VFT_STATUS_GEOMETRY = 5,
  VFT_STATUS_IO = 6,
  VFT_STATUS_PARSE = 7,
  VFT_STATUS_PANIC = 8,
} VftStatus;

/**
 * Desired path: points with surface normals.
 */
typedef struct VftPath VftPath;

/**
 * One recorded trial.
 */
typedef struct VftRecord VftRecord;

/**
 * Rigid-body arm model.
 */
typedef struct VftRobot VftRobot;

/**
 * Loaded experiment scenario.
 */
typedef struct VftScenario VftScenario;

/**
 * Per-trial scores.
 */
typedef struct VftTrialMetrics {
  double sal;
  double mean_error_mm;
  double error_sd_mm;
  size_t contact_losses;
  double duration;
} VftTrialMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (truncated, always
 * NUL-terminated when `len > 0`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` is null or valid for `len` writes.
 */
size_t vft_last_error(char *buf, size_t len);

/**
 * The built-in 7-DOF arm.
 *
 * # Safety
 * `out` is valid for one write.
 */
enum VftStatus vft_robot_default(struct VftRobot **out);

/**
 * Loads an arm description from a TOML file.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is valid for one write.
 */
enum VftStatus vft_robot_load(const char *path, struct VftRobot **out);

/**
 * # Safety
 * `robot` is null or a handle not yet freed.
 */
void vft_robot_free(struct VftRobot *robot);

/**
 * Joint count, or 0 for a null handle.
 *
 * # Safety
 * `robot` is null or a live handle.
 */
size_t vft_robot_dof(const struct VftRobot *robot);

/**
 * Gravity torque at `q` (`n` = dof) into `tau` (`n`).
 *
 * # Safety
 * `q` and `tau` are valid for `n` elements.
 */
enum VftStatus vft_robot_gravity_torque(const struct VftRobot *robot,
                                        const double *q,
                                        size_t n,
                                        double *tau);

/**
 * Joint-space mass matrix at `q` into `m` (`n`×`n`, row-major).
 *
 * # Safety
 * `q` is valid for `n` elements and `m` for `n * n`.
 */
enum VftStatus vft_robot_mass_matrix(const struct VftRobot *robot,
                                     const double *q,
                                     size_t n,
                                     double *m);

/**
 * Tool position (3) and rotation (9, row-major) at `q`.
 *
 * # Safety
 * `q` is valid for `n` elements, `position` for 3 and `rotation` for 9.
 */
enum VftStatus vft_robot_forward_kinematics(const struct VftRobot *robot,
                                            const double *q,
                                            size_t n,
                                            double *position,
                                            double *rotation);

/**
 * Path from `n` points and unit normals (xyz triples).
 *
 * # Safety
 * `points` and `normals` are valid for `3 * n` elements; `out` for one write.
 */
enum VftStatus vft_path_new(const double *points,
                            const double *normals,
                            size_t n,
                            bool closed,
                            struct VftPath **out);

/**
 * # Safety
 * `path` is null or a handle not yet freed.
 */
void vft_path_free(struct VftPath *path);

/**
 * Polyline length in meters, or NaN for a null handle.
 *
 * # Safety
 * `path` is null or a live handle.
 */
double vft_path_length(const struct VftPath *path);

/**
 * Nearest path point to `x` (3) into `point` (3) and its index.
 *
 * # Safety
 * `x` and `point` are valid for 3 elements; `index` for one write.
 */
enum VftStatus vft_path_nearest_point(const struct VftPath *path,
                                      const double *x,
                                      double *point,
                                      size_t *index);

/**
 * Spectral arc length of a speed profile sampled at `dt`, cutoff `omega_c` rad/s.
 *
 * # Safety
 * `speed` is valid for `n` elements; `out` for one write.
 */
enum VftStatus vft_sal(const double *speed, size_t n, double dt, double omega_c, double *out);

/**
 * Mean and standard deviation (mm) of the distance from the in-contact
 * samples of `x` (`n` xyz triples, `contact` flags) to `path`.
 *
 * # Safety
 * `x` is valid for `3 * n` elements and `contact` for `n`; `mean_mm` and
 * `sd_mm` for one write each.
 */
enum VftStatus vft_trajectory_error(const double *x,
                                    const bool *contact,
                                    size_t n,
                                    const struct VftPath *path,
                                    double *mean_mm,
                                    double *sd_mm);

/**
 * Loads a scenario file.
 *
 * # Safety
 * `path` is a NUL-terminated string; `out` is valid for one write.
 */
enum VftStatus vft_scenario_load(const char *path, struct VftScenario **out);

/**
 * # Safety
 * `scenario` is null or a handle not yet freed.
 */
void vft_scenario_free(struct VftScenario *scenario);

/**
 * Runs one trial. `mode` is "uni", "bi", "uni_vf" or "bi_vf".
 *
 * # Safety
 * `scenario` is a live handle, `mode` a NUL-terminated string and `out` valid
 * for one write.
 */
enum VftStatus vft_run_trial(const struct VftScenario *scenario,
                             const char *mode,
                             uint64_t seed,
                             struct VftRecord **out);

/**
 * # Safety
 * `record` is null or a handle not yet freed.
 */
void vft_record_free(struct VftRecord *record);

/**
 * Number of recorded samples, or 0 for a null handle.
 *
 * # Safety
 * `record` is null or a live handle.
 */
size_t vft_record_len(const struct VftRecord *record);

/**
 * Scores the trial against its scenario's ground-truth path.
 *
 * # Safety
 * `record` is a live handle; `out` is valid for one write.
 */
enum VftStatus vft_record_metrics(const struct VftRecord *record, struct VftTrialMetrics *out);

/**
 * Writes the samples as CSV.
 *
 * # Safety
 * `record` is a live handle; `path` a NUL-terminated string.
 */
enum VftStatus vft_record_write_csv(const struct VftRecord *record, const char *path);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VFTELEOP_H */
