#ifndef LATENT_STEER_H
#define LATENT_STEER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every call. Codes 2-5 match the command-line exit codes.
typedef enum LsStatus {
  LS_STATUS_OK = 0,
  LS_STATUS_VALIDATION = 2,
  LS_STATUS_IO = 3,
  LS_STATUS_NUMERICAL = 4,
  LS_STATUS_EMPTY_SPECIFICATION = 5,
  LS_STATUS_NULL_POINTER = 6,
  LS_STATUS_BUFFER_SIZE = 7,
  LS_STATUS_PANIC = 8,
} LsStatus;

typedef enum LsNormalization {
  LS_NORMALIZATION_STRICT_UNIT_L1 = 0,
  LS_NORMALIZATION_PRESERVE_INITIAL_L1 = 1,
} LsNormalization;

// Fitted raw and orthonormal axes. Opaque.
typedef struct LsAxes LsAxes;

// Attribute lexicon. Opaque.
typedef struct LsLexicon LsLexicon;

// Synthetic world (attribute oracle). Opaque.
typedef struct LsWorld LsWorld;

// Mirror of the steering configuration.
typedef struct LsSteeringConfig {
  double step_size;
  bool enable_differentiation;
  bool enable_reweight;
  bool enable_normalization;
  bool enable_feature_lock;
  enum LsNormalization normalization;
} LsSteeringConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ls_version(void);

// Message for the most recent failure on this thread, or NULL. The
// pointer stays valid until the next `ls_*` call on the same thread.
const char *ls_last_error_message(void);

// Unbiased, noiseless world over the first `n_attr` CelebA attributes.
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum LsStatus ls_world_new(size_t d_z,
                           size_t n_attr,
                           double rho,
                           double kappa,
                           uint64_t seed,
                           struct LsWorld **out);

// The shipped demo world (d_z = 8 over Male, Smiling, Young).
//
// # Safety
// `out` must be a valid pointer to writable storage for one handle.
enum LsStatus ls_world_demo(struct LsWorld **out);

// # Safety
// `file` must be a NUL-terminated path; `out` as for [`ls_world_new`].
enum LsStatus ls_world_load(const char *file, struct LsWorld **out);

// # Safety
// `world` must be a live handle; `file` a NUL-terminated path.
enum LsStatus ls_world_save(const struct LsWorld *world, const char *file);

// # Safety
// `world` must be NULL or a handle not yet freed.
void ls_world_free(struct LsWorld *world);

// # Safety
// `world` must be a live handle; `d_z` and `n_attr` writable.
enum LsStatus ls_world_dims(const struct LsWorld *world, size_t *d_z, size_t *n_attr);

// Attribute probabilities at `z` (length d_z) into `out` (length n_attr).
//
// # Safety
// Pointers must reference arrays of the stated lengths.
enum LsStatus ls_world_encode(const struct LsWorld *world,
                              const double *z,
                              size_t z_len,
                              double *out,
                              size_t out_len);

// Samples `n` labelled latents from `world` and fits its axes.
//
// # Safety
// `world` must be a live handle; `out` writable.
enum LsStatus ls_axes_fit(const struct LsWorld *world,
                          size_t n,
                          double ridge,
                          uint64_t seed,
                          struct LsAxes **out);

// # Safety
// `file` must be a NUL-terminated path; `out` writable.
enum LsStatus ls_axes_load(const char *file, struct LsAxes **out);

// # Safety
// `axes` must be a live handle; `file` a NUL-terminated path.
enum LsStatus ls_axes_save(const struct LsAxes *axes, const char *file);

// # Safety
// `axes` must be NULL or a handle not yet freed.
void ls_axes_free(struct LsAxes *axes);

// Copies the orthonormal basis (d_z × n_attr, column-major) into `out`.
//
// # Safety
// `out` must hold `len` doubles.
enum LsStatus ls_axes_basis(const struct LsAxes *axes, double *out, size_t len);

// # Safety
// `out` writable.
enum LsStatus ls_lexicon_default(struct LsLexicon **out);

// # Safety
// `file` must be a NUL-terminated path; `out` writable.
enum LsStatus ls_lexicon_load(const char *file, struct LsLexicon **out);

// # Safety
// `lexicon` must be NULL or a handle not yet freed.
void ls_lexicon_free(struct LsLexicon *lexicon);

// Classifies UTF-8 `text` into 40 CelebA targets. `values` and `mask`
// must both have length 40.
//
// # Safety
// `text` must be NUL-terminated; arrays must hold `len` elements.
enum LsStatus ls_classify(const struct LsLexicon *lexicon,
                          const char *text,
                          double *values,
                          bool *mask,
                          size_t len);

// Preset for ablation group 'A'..'E' (case-insensitive).
//
// # Safety
// `out` writable.
enum LsStatus ls_config_for_group(char group, struct LsSteeringConfig *out);

// Steers `z` (length d_z) toward `trg_values`/`trg_mask` (length n_attr)
// and writes the result to `out_z`.
//
// `org` is the attribute prediction at `z`; pass NULL to have `world`
// compute it. `world` may be NULL when `org` is given. `moves`, when not
// NULL, receives the number of moves applied.
//
// # Safety
// Handles must be live; arrays must have the stated lengths.
enum LsStatus ls_steer(const struct LsAxes *axes,
                       const struct LsWorld *world,
                       const struct LsSteeringConfig *config,
                       const double *z,
                       size_t d_z,
                       const double *trg_values,
                       const bool *trg_mask,
                       const double *org,
                       size_t n_attr,
                       double *out_z,
                       size_t *moves);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LATENT_STEER_H */
