#ifndef RWGATE_H
#define RWGATE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RwgStatus {
  RWG_STATUS_OK = 0,
  RWG_STATUS_NULL_POINTER = 1,
  RWG_STATUS_INVALID_ARGUMENT = 2,
  RWG_STATUS_CONFIG = 3,
  RWG_STATUS_IO = 4,
  RWG_STATUS_FORMAT = 5,
  RWG_STATUS_MODE = 6,
  RWG_STATUS_SOLVER = 7,
  RWG_STATUS_BUFFER_TOO_SMALL = 8,
  RWG_STATUS_PANIC = 9,
} RwgStatus;

/**
 * Spline control net of a design.
 */
typedef struct RwgDesign RwgDesign;

/**
 * Truth table and qubit encoding of a gate.
 */
typedef struct RwgGate RwgGate;

/**
 * Simulation grid, port modes and target built from a run configuration.
 */
typedef struct RwgProblem RwgProblem;

/**
 * Transfer matrix `g[input][output]` at one wavelength.
 */
typedef struct RwgTransfer RwgTransfer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. Valid until the next call.
 */
const char *rwg_last_error_message(void);

/**
 * Library version, a static string.
 */
const char *rwg_version(void);

/**
 * Build a transfer matrix from `n_in · n_out` row-major real and imaginary
 * parts.
 *
 * # Safety
 * `re` and `im` must point to `n_in · n_out` values; `out` must be writable.
 */
enum RwgStatus rwg_transfer_new(size_t n_in,
                                size_t n_out,
                                const double *re,
                                const double *im,
                                double wavelength,
                                struct RwgTransfer **out);

/**
 * # Safety
 * `t` must come from this library and not be used afterwards. Null is ignored.
 */
void rwg_transfer_free(struct RwgTransfer *t);

/**
 * Copy the matrix out as row-major real and imaginary parts.
 *
 * # Safety
 * `re` and `im` must hold `len` values each.
 */
enum RwgStatus rwg_transfer_get(const struct RwgTransfer *t, double *re, double *im, size_t len);

/**
 * Number of input (`side = 0`) or output (`side = 1`) ports, 0 on a null handle.
 *
 * # Safety
 * `t` must be null or a live handle.
 */
size_t rwg_transfer_ports(const struct RwgTransfer *t, uint32_t side);

/**
 * Two-fold correlations `Γ_mn` for photons entering ports `l` and `k`,
 * written row-major into `out` (`n_out²` values).
 *
 * # Safety
 * `out` must hold `len` values.
 */
enum RwgStatus rwg_twofold_correlation(const struct RwgTransfer *t,
                                       size_t l,
                                       size_t k,
                                       double *out,
                                       size_t len);

/**
 * One-fold correlations `Γ_n` for a photon entering port `i`.
 *
 * # Safety
 * `out` must hold `len` values.
 */
enum RwgStatus rwg_onefold_correlation(const struct RwgTransfer *t,
                                       size_t i,
                                       double *out,
                                       size_t len);

/**
 * Built-in gates: `"cnot"` or `"xgate"`.
 *
 * # Safety
 * `name` must be a NUL-terminated string; `out` must be writable.
 */
enum RwgStatus rwg_gate_new(const char *name, struct RwgGate **out);

/**
 * # Safety
 * `g` must come from this library and not be used afterwards. Null is ignored.
 */
void rwg_gate_free(struct RwgGate *g);

/**
 * Number of truth-table rows, 0 on a null handle.
 *
 * # Safety
 * `g` must be null or a live handle.
 */
size_t rwg_gate_rows(const struct RwgGate *g);

/**
 * Success of every truth-table row into `out`, the minimum into `min`.
 *
 * # Safety
 * `out` must hold `len` values; `min` must be writable.
 */
enum RwgStatus rwg_truth_table(const struct RwgTransfer *t,
                               const struct RwgGate *g,
                               double *out,
                               size_t len,
                               double *min);

/**
 * Build the simulation described by a TOML run configuration.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RwgStatus rwg_problem_load(const char *path, struct RwgProblem **out);

/**
 * # Safety
 * `p` must come from this library and not be used afterwards. Null is ignored.
 */
void rwg_problem_free(struct RwgProblem *p);

/**
 * Load the control net stored in a `design.ckpt` checkpoint.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum RwgStatus rwg_design_load(const char *path, struct RwgDesign **out);

/**
 * # Safety
 * `d` must come from this library and not be used afterwards. Null is ignored.
 */
void rwg_design_free(struct RwgDesign *d);

/**
 * Simulate a design: writes the new transfer matrix to `out` and the cost
 * to `cost`.
 *
 * # Safety
 * Handles must be live; `out` and `cost` must be writable.
 */
enum RwgStatus rwg_problem_evaluate(const struct RwgProblem *p,
                                    const struct RwgDesign *d,
                                    struct RwgTransfer **out,
                                    double *cost);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RWGATE_H */
