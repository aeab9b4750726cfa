#ifndef BBVI_H
#define BBVI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BbviStatus {
  BBVI_STATUS_OK = 0,
  BBVI_STATUS_NULL_POINTER = 1,
  BBVI_STATUS_INVALID_ARGUMENT = 2,
  BBVI_STATUS_CONFIG = 3,
  BBVI_STATUS_IO = 4,
  BBVI_STATUS_NUMERIC = 5,
  /**
   * The run finished without meeting its stopping rule; the result is
   * still returned.
   */
  BBVI_STATUS_NOT_CONVERGED = 6,
  BBVI_STATUS_BUFFER_TOO_SMALL = 7,
  BBVI_STATUS_PANIC = 8,
} BbviStatus;

typedef enum BbviFamily {
  BBVI_FAMILY_MEAN_FIELD = 0,
  BBVI_FAMILY_FULL_RANK = 1,
} BbviFamily;

typedef enum BbviGaussianStructure {
  BBVI_GAUSSIAN_STRUCTURE_IDENTITY = 0,
  BBVI_GAUSSIAN_STRUCTURE_DIAG_NONIDENTITY = 1,
  BBVI_GAUSSIAN_STRUCTURE_UNIFORM_CORR = 2,
  BBVI_GAUSSIAN_STRUCTURE_BANDED_CORR = 3,
} BbviGaussianStructure;

/**
 * Opaque run configuration.
 */
typedef struct BbviConfig BbviConfig;

/**
 * Opaque result of [`bbvi_run`].
 */
typedef struct BbviResult BbviResult;

/**
 * Opaque target density.
 */
typedef struct BbviTarget BbviTarget;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *bbvi_version(void);

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next `bbvi_*` call on the same thread.
 */
const char *bbvi_last_error_message(void);

enum BbviStatus bbvi_config_default(struct BbviConfig **out);

/**
 * Parse a `key=value` configuration document.
 */
enum BbviStatus bbvi_config_parse(const char *text, struct BbviConfig **out);

/**
 * Set one key. The configuration is validated as a whole by [`bbvi_run`].
 */
enum BbviStatus bbvi_config_set(struct BbviConfig *cfg, const char *key, const char *value);

/**
 * Canonical text of the configuration, written NUL-terminated into `buf`.
 * `needed` receives the required size including the terminator.
 */
enum BbviStatus bbvi_config_to_string(const struct BbviConfig *cfg,
                                      char *buf,
                                      size_t len,
                                      size_t *needed);

void bbvi_config_free(struct BbviConfig *cfg);

/**
 * `N(0, V)` with the given covariance structure; `corr` is ignored for
 * diagonal structures.
 */
enum BbviStatus bbvi_target_gaussian(uint32_t structure,
                                     size_t d,
                                     double corr,
                                     struct BbviTarget **out);

/**
 * Logistic regression on a row-major `n x p` design `x` and 0/1 responses.
 */
enum BbviStatus bbvi_target_logistic(const double *x,
                                     size_t n,
                                     size_t p,
                                     const double *y,
                                     double prior_scale,
                                     struct BbviTarget **out);

/**
 * Dimension of the target, or 0 for a null handle.
 */
size_t bbvi_target_dim(const struct BbviTarget *target);

/**
 * Unnormalized log density at `theta`; the gradient is written to `grad`
 * when it is non-null.
 */
enum BbviStatus bbvi_target_log_density(const struct BbviTarget *target,
                                        const double *theta,
                                        size_t len,
                                        double *out_logp,
                                        double *grad);

void bbvi_target_free(struct BbviTarget *target);

/**
 * Symmetrized KL divergence between two flat parameter vectors of the same
 * family.
 */
enum BbviStatus bbvi_skl(uint32_t family,
                         const double *a,
                         const double *b,
                         size_t len,
                         double *out);

/**
 * Run the configured algorithm on `target`. No files are written. On `Ok`
 * and `NotConverged` a result handle is stored in `out`.
 */
enum BbviStatus bbvi_run(const struct BbviConfig *cfg,
                         const struct BbviTarget *target,
                         struct BbviResult **out);

size_t bbvi_result_num_params(const struct BbviResult *res);

/**
 * Copy the final variational parameters into `buf`.
 */
enum BbviStatus bbvi_result_params(const struct BbviResult *res, double *buf, size_t len);

uint64_t bbvi_result_terminal_step(const struct BbviResult *res);

bool bbvi_result_success(const struct BbviResult *res);

/**
 * Termination reason; owned by the result.
 */
const char *bbvi_result_reason(const struct BbviResult *res);

/**
 * Trace records, one JSON object per line; owned by the result.
 */
const char *bbvi_result_trace(const struct BbviResult *res);

void bbvi_result_free(struct BbviResult *res);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BBVI_H */
