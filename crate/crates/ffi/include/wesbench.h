#ifndef WESBENCH_H
#define WESBENCH_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum WesStatus {
  WES_STATUS_OK = 0,
  WES_STATUS_NULL_POINTER = 1,
  WES_STATUS_INVALID_ARGUMENT = 2,
  WES_STATUS_DIMENSION_MISMATCH = 3,
  WES_STATUS_NUMERIC = 4,
  WES_STATUS_IO = 5,
  WES_STATUS_FORMAT = 6,
  WES_STATUS_CONFIG = 7,
  WES_STATUS_PANIC = 8,
} WesStatus;

// A toy potential energy surface.
typedef struct WesPotential WesPotential;

// A fitted TICA model.
typedef struct WesTicaModel WesTicaModel;

// A WETB trajectory file loaded in memory.
typedef struct WesTrajectory WesTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer
// stays valid until the next call into this library on the same thread.
const char *wes_last_error(void);

// Library version as a static NUL-terminated string.
const char *wes_version(void);

// `kind`: 0 double well, 1 Mueller-Brown, 2 coarse-grained chain, each
// with default parameters at temperature `kt`.
//
// # Safety
// `out_handle` must be a valid pointer.
enum WesStatus wes_potential_new(uint32_t kind, double kt, struct WesPotential **out_handle);

// Builds a potential from the JSON `system` object of a benchmark config.
//
// # Safety
// `json` must be a NUL-terminated string and `out_handle` a valid pointer.
enum WesStatus wes_potential_from_json(const char *json, struct WesPotential **out_handle);

// # Safety
// `p` must be null or a handle from this library, not yet freed.
void wes_potential_free(struct WesPotential *p);

// Number of coordinates (particles times dimensions) of a conformation.
//
// # Safety
// `p` must be a valid handle.
size_t wes_potential_n_coords(const struct WesPotential *p);

// Energy of the flat coordinates `x`.
//
// # Safety
// `x` must hold `len` values and `energy` be a valid pointer.
enum WesStatus wes_potential_energy(const struct WesPotential *p,
                                    const double *x,
                                    size_t len,
                                    double *energy);

// Force `-grad E` at `x`, written to `force` (same length).
//
// # Safety
// `x` and `force` must each hold `len` values.
enum WesStatus wes_potential_force(const struct WesPotential *p,
                                   const double *x,
                                   size_t len,
                                   double *force);

// Loads a `tica_model.json` file.
//
// # Safety
// `file` must be NUL-terminated and `out_handle` valid.
enum WesStatus wes_tica_load(const char *file, struct WesTicaModel **out_handle);

// # Safety
// `m` must be null or a live handle.
void wes_tica_free(struct WesTicaModel *m);

// # Safety
// `m` must be a valid handle.
size_t wes_tica_n_components(const struct WesTicaModel *m);

// # Safety
// `m` must be a valid handle.
size_t wes_tica_n_features(const struct WesTicaModel *m);

// Projects `n_frames` conformations of `n_particles x dims` coordinates
// onto the model's TICs; `tics` receives `n_frames x n_components`.
//
// # Safety
// Buffers must match the stated sizes.
enum WesStatus wes_tica_project_frames(const struct WesTicaModel *m,
                                       const double *coords,
                                       size_t n_frames,
                                       size_t n_particles,
                                       size_t dims,
                                       double *tics,
                                       size_t tics_len);

// # Safety
// `file` must be NUL-terminated and `out_handle` valid.
enum WesStatus wes_trajectory_open(const char *file, struct WesTrajectory **out_handle);

// # Safety
// `t` must be null or a live handle.
void wes_trajectory_free(struct WesTrajectory *t);

// Frames, particles per frame and dimensions; any output may be null.
//
// # Safety
// `t` must be a valid handle.
enum WesStatus wes_trajectory_shape(const struct WesTrajectory *t,
                                    size_t *n_frames,
                                    size_t *n_particles,
                                    size_t *dims);

// Copies the per-frame weights; `len` must equal the frame count.
//
// # Safety
// `weights` must hold `len` values.
enum WesStatus wes_trajectory_weights(const struct WesTrajectory *t, double *weights, size_t len);

// Copies the single-precision coordinates, frame-major.
//
// # Safety
// `coords` must hold `len` values.
enum WesStatus wes_trajectory_coords(const struct WesTrajectory *t, float *coords, size_t len);

// Stationary distribution of the row-stochastic `n x n` matrix `t`.
//
// # Safety
// `t` must hold `n * n` values and `pi` `n` values.
enum WesStatus wes_stationary_distribution(const double *t, size_t n, double *pi);

// Wasserstein-1 distance between two normalized histograms on the shared
// `n_bins + 1` edges.
//
// # Safety
// `edges` must hold `n_bins + 1` values, `p` and `q` `n_bins` each.
enum WesStatus wes_w1_distance(const double *edges,
                               size_t n_bins,
                               const double *p,
                               const double *q,
                               double *result);

// `D_KL(p || q)` in nats with both masses floored at `epsilon`.
//
// # Safety
// As for [`wes_w1_distance`].
enum WesStatus wes_kl_divergence(const double *edges,
                                 size_t n_bins,
                                 const double *p,
                                 const double *q,
                                 double epsilon,
                                 double *result);

// Radius of gyration of one conformation (equal masses).
//
// # Safety
// `coords` must hold `n_particles * dims` values.
enum WesStatus wes_radius_of_gyration(const double *coords,
                                      size_t n_particles,
                                      size_t dims,
                                      double *result);

// Percentage of reference-occupied cells of a `grid_n x grid_n` grid that
// model points visit; both point sets are `n x 2` row-major.
//
// # Safety
// `gt` must hold `2 * n_gt` values and `model` `2 * n_model`.
enum WesStatus wes_coverage(const double *gt,
                            size_t n_gt,
                            const double *model,
                            size_t n_model,
                            size_t grid_n,
                            double *result);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WESBENCH_H */
