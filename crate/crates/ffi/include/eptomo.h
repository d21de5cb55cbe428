#ifndef EPTOMO_H
#define EPTOMO_H

/* Generated by cbindgen from eptomo-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Status codes returned by every fallible call.
typedef enum EptStatus {
  EPT_OK = 0,
  EPT_NULL_POINTER = 1,
  EPT_INVALID_ARGUMENT = 2,
  EPT_DATA_ERROR = 3,
  EPT_NUMERICAL_ERROR = 4,
  EPT_PANIC = 5,
} EptStatus;

// Opaque density-matrix handle.
typedef struct EptDensityMatrix EptDensityMatrix;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent error on this thread. The pointer
// stays valid until the next failing call on the same thread.
const char *ept_last_error_message(void);

// Builds a density matrix from `dim*dim` row-major complex entries given
// as interleaved `re, im` pairs (`2*dim*dim` doubles). Validates all state
// invariants.
//
// # Safety
// `re_im` must point to `2*dim*dim` readable doubles and `out` to a
// writable handle slot.
enum EptStatus ept_density_matrix_new(const double *re_im,
                                      uintptr_t dim,
                                      struct EptDensityMatrix **out);

// Frees a handle created by this library. Null is a no-op.
//
// # Safety
// `handle` must come from this library and not be used afterwards.
void ept_density_matrix_free(struct EptDensityMatrix *handle);

// Dimension (2 or 4) of the state; 0 on null input.
//
// # Safety
// `handle` must be a valid handle or null.
uintptr_t ept_density_matrix_dim(const struct EptDensityMatrix *handle);

// Copies the entries out as interleaved `re, im` pairs (`2*dim*dim`
// doubles, row-major).
//
// # Safety
// `out` must point to `2*dim*dim` writable doubles.
enum EptStatus ept_density_matrix_get(const struct EptDensityMatrix *handle, double *out);

// Reads a density matrix from the text format (dimension line, then
// row-major re/im pairs), re-validating all invariants.
//
// # Safety
// `path` must be a NUL-terminated string, `out` a writable handle slot.
enum EptStatus ept_density_matrix_read(const char *path, struct EptDensityMatrix **out);

// Writes the state in the text format.
//
// # Safety
// `handle` must be valid and `path` a NUL-terminated string.
enum EptStatus ept_density_matrix_write(const struct EptDensityMatrix *handle, const char *path);

// Smallest eigenvalue of the partially transposed state (negative iff
// entangled).
//
// # Safety
// `handle` must be a valid 4x4 state handle, `out` writable.
enum EptStatus ept_ppt_min_eigenvalue(const struct EptDensityMatrix *handle, double *out);

// Wootters concurrence.
//
// # Safety
// As [`ept_ppt_min_eigenvalue`].
enum EptStatus ept_concurrence(const struct EptDensityMatrix *handle, double *out);

// Entanglement of formation.
//
// # Safety
// As [`ept_ppt_min_eigenvalue`].
enum EptStatus ept_entanglement_of_formation(const struct EptDensityMatrix *handle, double *out);

// Fidelity with the Bell state `(|L,H⟩+|R,V⟩)/√2` without basis rotation.
//
// # Safety
// As [`ept_ppt_min_eigenvalue`].
enum EptStatus ept_bell_fidelity(const struct EptDensityMatrix *handle, double *out);

// Bell fidelity maximised over photon-side unitaries. `out_rotation`, when
// non-null, receives the optimal 2x2 unitary as 8 doubles (row-major
// interleaved re/im).
//
// # Safety
// `handle` must be a valid 4x4 state handle; `out_fidelity` writable;
// `out_rotation` null or pointing to 8 writable doubles.
enum EptStatus ept_bell_fidelity_opt(const struct EptDensityMatrix *handle,
                                     double *out_fidelity,
                                     double *out_rotation);

// Least-squares fit of `y(φ) = A(1 + V cos(φ + φ₀))` to a phase-binned
// histogram of `len ≥ 8` points.
//
// # Safety
// `phases` and `values` must point to `len` readable doubles; the four
// output pointers must be writable.
enum EptStatus ept_fit_fringe(const double *phases,
                              const double *values,
                              uintptr_t len,
                              double *out_amplitude,
                              double *out_visibility,
                              double *out_phase,
                              double *out_residual_rms);

// Gelman-Rubin statistic over `n_chains` equal-length scalar series laid
// out contiguously (`chain 0 first`).
//
// # Safety
// `series` must point to `n_chains*len` readable doubles, `out` writable.
enum EptStatus ept_gelman_rubin(const double *series,
                                uintptr_t n_chains,
                                uintptr_t len,
                                double *out);

// Normalised autocorrelation of a scalar series; writes `max_lag + 1`
// doubles.
//
// # Safety
// `series` must point to `len` readable doubles and `out` to `max_lag + 1`
// writable doubles.
enum EptStatus ept_autocorrelation(const double *series,
                                   uintptr_t len,
                                   uintptr_t max_lag,
                                   double *out);

// Runs one CLI command (`simulate`, `pipeline`, `scan-mle`, `reconstruct`,
// `analyze`, `diagnose`) against a config file. `seed < 0` keeps the
// config seed; `out_dir` may be null.
//
// # Safety
// `command` and `config_path` must be NUL-terminated strings; `out_dir`
// null or NUL-terminated.
enum EptStatus ept_run(const char *command,
                       const char *config_path,
                       int64_t seed,
                       const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EPTOMO_H */
