#ifndef CGOLAB_H
#define CGOLAB_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CGOLAB_OK 0

#define CGOLAB_ERR_NULL -1

#define CGOLAB_ERR_UTF8 -2

#define CGOLAB_ERR_DOMAIN -3

#define CGOLAB_ERR_CONFIG -4

#define CGOLAB_ERR_GEOMETRY -5

#define CGOLAB_ERR_SOLVER -6

#define CGOLAB_ERR_RESONANCE -7

#define CGOLAB_ERR_IO -8

#define CGOLAB_ERR_BUFFER -9

#define CGOLAB_ERR_PANIC -10

#define CGOLAB_ERR_OTHER -11

/**
 * Grid, eigenbasis and line grid built from a TOML configuration.
 */
typedef struct CgolabPipeline CgolabPipeline;

/**
 * A sampled Gaussian beam.
 */
typedef struct CgolabQuasimode CgolabQuasimode;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message (NUL-terminated) into `buf`. Returns
 * `CGOLAB_ERR_BUFFER` when `len` is too small; the message is truncated.
 *
 * # Safety
 * `buf` must point to `len` writable bytes.
 */
int32_t cgolab_last_error(char *buf, size_t len);

/**
 * `s = sqrt(k^2 + (tau + i lambda)^2)` and `varsigma = sqrt(k^2 + tau^2 - lambda^2)`.
 *
 * # Safety
 * Output pointers must be valid for writes.
 */
int32_t cgolab_spectral_parameter(double k,
                                  double tau,
                                  double lambda,
                                  double *s_re,
                                  double *s_im,
                                  double *varsigma);

/**
 * Parameter schedule: writes the case (1 or 2), `tau` and the `lambda` window.
 *
 * # Safety
 * Output pointers must be valid for writes.
 */
int32_t cgolab_schedule(double k,
                        double eps,
                        double sigma,
                        double d,
                        int32_t *case_out,
                        double *tau,
                        double *window);

/**
 * Build a pipeline from TOML text (NULL or empty text: defaults).
 *
 * # Safety
 * `config` must be NULL or a NUL-terminated string; `out` must be valid.
 */
int32_t cgolab_pipeline_new(const char *config, struct CgolabPipeline **out);

/**
 * # Safety
 * `p` must be NULL or a handle from `cgolab_pipeline_new` not yet freed.
 */
void cgolab_pipeline_free(struct CgolabPipeline *p);

/**
 * Number of transversal grid nodes (interior then boundary).
 *
 * # Safety
 * `p` must be a live handle; `n` valid for writes.
 */
int32_t cgolab_pipeline_nodes(const struct CgolabPipeline *p, size_t *n);

/**
 * Lowest retained Dirichlet eigenvalues `omega_j^2`; writes up to `len`
 * values and the count into `written`.
 *
 * # Safety
 * `p` live; `values` points to `len` writable doubles.
 */
int32_t cgolab_pipeline_eigenvalues(const struct CgolabPipeline *p,
                                    double *values,
                                    size_t len,
                                    size_t *written);

/**
 * Gaussian beam through `(x, y)` in direction `(dx, dy)` for `(k, tau, lambda)`.
 *
 * # Safety
 * `p` live; `out` valid for writes.
 */
int32_t cgolab_quasimode_new(const struct CgolabPipeline *p,
                             double x,
                             double y,
                             double dx,
                             double dy,
                             double k,
                             double tau,
                             double lambda,
                             struct CgolabQuasimode **out);

/**
 * # Safety
 * `q` must be NULL or a handle from `cgolab_quasimode_new` not yet freed.
 */
void cgolab_quasimode_free(struct CgolabQuasimode *q);

/**
 * Copy the beam samples into `re`/`im` (length must equal the node count).
 *
 * # Safety
 * `q` live; `re` and `im` point to `len` writable doubles.
 */
int32_t cgolab_quasimode_field(const struct CgolabQuasimode *q, double *re, double *im, size_t len);

/**
 * Relative residual `|(-Delta - s^2) v| / (|s|^2 |v|)`.
 *
 * # Safety
 * Handles live; `out` valid for writes.
 */
int32_t cgolab_quasimode_residual(const struct CgolabPipeline *p,
                                  const struct CgolabQuasimode *q,
                                  double *out);

/**
 * Separable test coefficient reconstruction; writes the `L^2` error.
 *
 * # Safety
 * `p` live; `l2_error` valid for writes.
 */
int32_t cgolab_reconstruct(const struct CgolabPipeline *p,
                           double k,
                           double eps,
                           uint64_t seed,
                           double *l2_error);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CGOLAB_H */
