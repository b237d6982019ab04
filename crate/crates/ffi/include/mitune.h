#ifndef MITUNE_H
#define MITUNE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum MituneStatus {
  MITUNE_STATUS_OK = 0,
  MITUNE_STATUS_NULL_POINTER = 1,
  MITUNE_STATUS_INVALID_ARGUMENT = 2,
  MITUNE_STATUS_DIMENSION_MISMATCH = 3,
  MITUNE_STATUS_STEP_OUT_OF_RANGE = 4,
  MITUNE_STATUS_CHECKPOINT = 5,
  MITUNE_STATUS_IO = 6,
  MITUNE_STATUS_NUMERIC = 7,
  MITUNE_STATUS_NOT_AVAILABLE = 8,
  MITUNE_STATUS_PANIC = 9,
} MituneStatus;

/**
 * Values of [`MituneCondition::kind`].
 */
typedef enum MituneConditionKind {
  MITUNE_CONDITION_KIND_NULL = 0,
  MITUNE_CONDITION_KIND_LABEL = 1,
  MITUNE_CONDITION_KIND_VECTOR = 2,
} MituneConditionKind;

/**
 * Opaque denoiser: either a loaded checkpoint or an analytic oracle.
 */
typedef struct MituneDenoiser MituneDenoiser;

/**
 * Opaque noise schedule.
 */
typedef struct MituneSchedule MituneSchedule;

/**
 * Opaque data world.
 */
typedef struct MituneWorld MituneWorld;

/**
 * A condition passed by value. `kind` is a [`MituneConditionKind`] value;
 * `label` is read for labels, `values` and `len` for vectors.
 */
typedef struct MituneCondition {
  uint32_t kind;
  size_t label;
  const double *values;
  size_t len;
} MituneCondition;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *mitune_last_error(void);

/**
 * Linear schedule with `steps` steps from `beta_start` to `beta_end`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MituneStatus mitune_schedule_new(size_t steps,
                                      double beta_start,
                                      double beta_end,
                                      struct MituneSchedule **out);

/**
 * # Safety
 * `s` must come from [`mitune_schedule_new`] or be null.
 */
void mitune_schedule_free(struct MituneSchedule *s);

/**
 * # Safety
 * `s` must be a live schedule handle or null.
 */
size_t mitune_schedule_steps(const struct MituneSchedule *s);

/**
 * Writes `alpha_bar_t` and `kappa_t` for `1 <= t <= T`.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MituneStatus mitune_schedule_at(const struct MituneSchedule *s,
                                     size_t t,
                                     double *alpha_bar,
                                     double *kappa);

/**
 * Correlated Gaussian world of dimension `dim`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum MituneStatus mitune_world_correlated(size_t dim, double rho, struct MituneWorld **out);

/**
 * Labeled mixture with `num_labels` means stored row-major in `means`
 * (`num_labels * dim` values).
 *
 * # Safety
 * `means` must hold `num_labels * dim` values; `out` must be valid.
 */
enum MituneStatus mitune_world_mixture(const double *means,
                                       size_t num_labels,
                                       size_t dim,
                                       double data_sigma,
                                       double label_noise,
                                       struct MituneWorld **out);

/**
 * # Safety
 * `w` must come from a world constructor or be null.
 */
void mitune_world_free(struct MituneWorld *w);

/**
 * Closed-form MI in nats; `NotAvailable` for mixture worlds.
 *
 * # Safety
 * Pointers must be valid.
 */
enum MituneStatus mitune_world_closed_form_mi(const struct MituneWorld *w, double *out);

/**
 * `log q(z | cond) - log q(z)` under the world's densities.
 *
 * # Safety
 * `z` must hold `len` values; pointers must be valid.
 */
enum MituneStatus mitune_world_log_likelihood_ratio(const struct MituneWorld *w,
                                                    const double *z,
                                                    size_t len,
                                                    struct MituneCondition cond,
                                                    double *out);

/**
 * Analytic denoiser of `world` under `schedule` (both are copied).
 *
 * # Safety
 * Pointers must be valid.
 */
enum MituneStatus mitune_denoiser_oracle(const struct MituneWorld *world,
                                         const struct MituneSchedule *schedule,
                                         struct MituneDenoiser **out);

/**
 * Loads a base checkpoint. When `schedule_out` is non-null it receives a
 * new handle for the schedule stored in the checkpoint header.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid.
 */
enum MituneStatus mitune_denoiser_load(const char *path,
                                       struct MituneDenoiser **out,
                                       struct MituneSchedule **schedule_out);

/**
 * # Safety
 * `d` must come from a denoiser constructor or be null.
 */
void mitune_denoiser_free(struct MituneDenoiser *d);

/**
 * # Safety
 * `d` must be a live denoiser handle or null.
 */
size_t mitune_denoiser_dim(const struct MituneDenoiser *d);

/**
 * Noise prediction at step `t`; `z` and `eps_out` hold `len` values.
 *
 * # Safety
 * Buffers must hold `len` values; pointers must be valid.
 */
enum MituneStatus mitune_denoiser_eval(const struct MituneDenoiser *d,
                                       const double *z,
                                       size_t len,
                                       struct MituneCondition cond,
                                       size_t t,
                                       double *eps_out);

/**
 * Point-wise MI of a given sample averaged over `n_mc` random steps.
 * `stderr_out` may be null; it receives NaN when `n_mc == 1`.
 *
 * # Safety
 * `z` must hold `len` values; pointers must be valid.
 */
enum MituneStatus mitune_mi_forward(const struct MituneDenoiser *d,
                                    const struct MituneSchedule *s,
                                    const double *z,
                                    size_t len,
                                    struct MituneCondition cond,
                                    size_t n_mc,
                                    uint64_t seed,
                                    double *mi_out,
                                    double *stderr_out);

/**
 * Generates one sample (written to `z_out`, `len` values) and its
 * point-wise MI along the same trajectory.
 *
 * # Safety
 * `z_out` must hold `len` values; pointers must be valid.
 */
enum MituneStatus mitune_mi_generate(const struct MituneDenoiser *d,
                                     const struct MituneSchedule *s,
                                     struct MituneCondition cond,
                                     double guidance,
                                     uint64_t seed,
                                     double *z_out,
                                     size_t len,
                                     double *mi_out);

/**
 * Kendall tau-a between two rankings of the same `n` ids.
 *
 * # Safety
 * `a` and `b` must hold `n` values; `out` must be valid.
 */
enum MituneStatus mitune_kendall_tau(const size_t *a, const size_t *b, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MITUNE_H */
