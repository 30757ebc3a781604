#ifndef BRIDGECAT_H
#define BRIDGECAT_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Call outcome.
 */
typedef enum {
  BC_STATUS_OK = 0,
  BC_STATUS_NULL_POINTER = 1,
  BC_STATUS_INVALID_ARGUMENT = 2,
  BC_STATUS_PARSE = 3,
  BC_STATUS_IO = 4,
  BC_STATUS_CHECKPOINT = 5,
  BC_STATUS_DATA = 6,
  BC_STATUS_BUFFER_TOO_SMALL = 7,
  BC_STATUS_PANIC = 8,
} bc_status;

/**
 * Denoiser with its bridge schedule.
 */
typedef struct bc_model bc_model;

/**
 * Periodic slab structure.
 */
typedef struct bc_structure bc_structure;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *bc_version(void);

/**
 * Message of the last failed call on this thread; empty after success.
 * Valid until the next call on the same thread.
 */
const char *bc_last_error_message(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
bc_status bc_structure_read(const char *path, bc_structure **out);

/**
 * # Safety
 * `text` must be a NUL-terminated string and `out` writable.
 */
bc_status bc_structure_parse(const char *text, bc_structure **out);

/**
 * # Safety
 * `s` must be a live handle and `path` a NUL-terminated string.
 */
bc_status bc_structure_write(const bc_structure *s, const char *path);

/**
 * Serialise into `buf` (capacity `len` bytes, NUL included). `needed`
 * receives the required capacity; `BufferTooSmall` when `len` is short.
 *
 * # Safety
 * `s` must be a live handle, `buf` writable for `len` bytes (or null with
 * `len` 0) and `needed` writable.
 */
bc_status bc_structure_format(const bc_structure *s, char *buf, size_t len, size_t *needed);

/**
 * # Safety
 * `s` must be null or a handle not yet freed.
 */
void bc_structure_free(bc_structure *s);

/**
 * # Safety
 * `s` must be a live handle and `n` writable.
 */
bc_status bc_structure_atom_count(const bc_structure *s, size_t *n);

/**
 * Copy Cartesian positions (Å) as x0 y0 z0 x1 … into `buf` of `len`
 * doubles; `len` must be at least 3·N.
 *
 * # Safety
 * `s` must be a live handle and `buf` writable for `len` doubles.
 */
bc_status bc_structure_positions(const bc_structure *s, double *buf, size_t len);

/**
 * Replace positions from `len` = 3·N doubles.
 *
 * # Safety
 * `s` must be a live handle and `buf` readable for `len` doubles.
 */
bc_status bc_structure_set_positions(bc_structure *s, const double *buf, size_t len);

/**
 * Distance-matrix mean absolute error between two structures (Å).
 *
 * # Safety
 * `a`, `b` must be live handles and `out` writable.
 */
bc_status bc_dmae(const bc_structure *a, const bc_structure *b, double *out);

/**
 * Load a checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
bc_status bc_model_load(const char *path, bc_model **out);

/**
 * # Safety
 * `m` must be null or a handle not yet freed.
 */
void bc_model_free(bc_model *m);

/**
 * Run the reverse bridge from `initial`; `steps` sampling steps, noise
 * scale `eta` in [0, 1], random stream `seed`.
 *
 * # Safety
 * `m`, `initial` must be live handles and `out` writable.
 */
bc_status bc_generate(const bc_model *m,
                      const bc_structure *initial,
                      size_t steps,
                      double eta,
                      uint64_t seed,
                      bc_structure **out);

/**
 * Classifier confidence in (0, 1).
 *
 * # Safety
 * `m`, `s` must be live handles and `out` writable.
 */
bc_status bc_confidence(const bc_model *m, const bc_structure *s, double *out);

/**
 * Relax with the default surrogate oracle. `steps` and `energy` (eV) may
 * be null.
 *
 * # Safety
 * `s` must be a live handle, `out` writable, `steps`/`energy` null or
 * writable.
 */
bc_status bc_oracle_relax(const bc_structure *s, bc_structure **out, size_t *steps, double *energy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BRIDGECAT_H */
