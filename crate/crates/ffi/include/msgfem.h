#ifndef MSGFEM_H
#define MSGFEM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MsgfemStatus {
  MSGFEM_STATUS_OK = 0,
  MSGFEM_STATUS_NULL_POINTER = 1,
  MSGFEM_STATUS_CONFIG = 2,
  MSGFEM_STATUS_NUMERICAL = 3,
  MSGFEM_STATUS_IO = 4,
  MSGFEM_STATUS_BUFFER = 5,
  MSGFEM_STATUS_PANIC = 6,
} MsgfemStatus;

// Opaque coefficient raster.
typedef struct MsgfemCoefficient MsgfemCoefficient;

// Opaque solver: fine reference, local spaces and coarse space for one
// parameter set, with the benchmark right-hand side.
typedef struct MsgfemSolver MsgfemSolver;

typedef struct MsgfemParams {
  // Fine cells per axis.
  size_t n;
  // Subdomains per axis.
  size_t per_axis;
  // Oversampling layers.
  size_t ell;
  // Largest number of local basis functions later evaluations may use.
  size_t nloc_max;
  double eps;
  // Worker threads, 0 for all cores.
  size_t workers;
} MsgfemParams;

typedef struct MsgfemReport {
  double err_energy;
  double err_rel;
  double bound_thm21;
  double reference_norm;
  size_t kappa;
  size_t kappa_star;
  size_t coarse_dim;
} MsgfemReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version, a static NUL-terminated string.
const char *msgfem_version(void);

// Message of the last failed call on this thread, or NULL. Valid until the
// next failing call on the same thread.
const char *msgfem_last_error(void);

// Desk-scale defaults: n = 256, N = 8, ℓ = 8, n_loc ≤ 30, ε = 0.1.
struct MsgfemParams msgfem_params_default(void);

// Seeded log-uniform raster with values in `[1, contrast]`.
//
// # Safety
// `out` must be valid for writes.
enum MsgfemStatus msgfem_coefficient_generate(uint64_t seed,
                                              double s,
                                              double contrast,
                                              struct MsgfemCoefficient **out);

// # Safety
// `path` must be a NUL-terminated string and `out` valid for writes.
enum MsgfemStatus msgfem_coefficient_load(const char *path, struct MsgfemCoefficient **out);

// # Safety
// `coef` must come from this library; `path` must be NUL-terminated.
enum MsgfemStatus msgfem_coefficient_save(const struct MsgfemCoefficient *coef, const char *path);

// Value of the micro-cell containing `(x, y)`.
//
// # Safety
// `coef` must come from this library and `value` be valid for writes.
enum MsgfemStatus msgfem_coefficient_eval(const struct MsgfemCoefficient *coef,
                                          double x,
                                          double y,
                                          double *value);

// # Safety
// `coef` must come from this library (or be NULL) and not be used again.
void msgfem_coefficient_free(struct MsgfemCoefficient *coef);

// Fine reference solve and all local solves for `params`.
//
// # Safety
// `coef` must come from this library; `params` and `out` must be valid.
enum MsgfemStatus msgfem_solver_new(const struct MsgfemCoefficient *coef,
                                    const struct MsgfemParams *params,
                                    struct MsgfemSolver **out);

// Number of mesh nodes, the length of solution buffers.
//
// # Safety
// `solver` must come from this library.
size_t msgfem_solver_node_count(const struct MsgfemSolver *solver);

// Coarse solve with `nloc` local basis functions per subdomain.
//
// # Safety
// `solver` must come from this library and `report` be valid for writes.
enum MsgfemStatus msgfem_solver_evaluate(const struct MsgfemSolver *solver,
                                         size_t nloc,
                                         struct MsgfemReport *report);

// Nodal values of the coarse solution, node `iy·(n+1) + ix`.
//
// # Safety
// `buf` must hold `len` doubles.
enum MsgfemStatus msgfem_solver_solution(const struct MsgfemSolver *solver,
                                         size_t nloc,
                                         double *buf,
                                         size_t len);

// Nodal values of the fine reference solution.
//
// # Safety
// `buf` must hold `len` doubles.
enum MsgfemStatus msgfem_solver_reference(const struct MsgfemSolver *solver,
                                          double *buf,
                                          size_t len);

// # Safety
// `solver` must come from this library (or be NULL) and not be used again.
void msgfem_solver_free(struct MsgfemSolver *solver);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MSGFEM_H */
