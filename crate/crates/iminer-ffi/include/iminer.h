#ifndef IMINER_H
#define IMINER_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible FFI call.
 */
typedef enum IminerStatus {
  IMINER_STATUS_OK = 0,
  IMINER_STATUS_NULL_POINTER = 1,
  IMINER_STATUS_INVALID_ARGUMENT = 2,
  IMINER_STATUS_UTF8_ERROR = 3,
  IMINER_STATUS_JSON_ERROR = 4,
  IMINER_STATUS_NUMERIC_ERROR = 5,
} IminerStatus;

/**
 * Opaque trained-pipeline handle (scaler + clustering + FIS).
 */
typedef struct IminerBundle IminerBundle;

/**
 * Opaque fuzzy-inference-system handle.
 */
typedef struct IminerFis IminerFis;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread; empty string when none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *iminer_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *iminer_version(void);

/**
 * Parse a FIS from its JSON form. Returns NULL on failure (see
 * `iminer_last_error`); release with `iminer_fis_free`.
 *
 * # Safety
 * `json` must be a valid NUL-terminated C string.
 */
struct IminerFis *iminer_fis_from_json(const char *json);

/**
 * Number of crisp inputs the FIS expects.
 *
 * # Safety
 * `fis` must be a live handle from `iminer_fis_from_json`.
 */
uintptr_t iminer_fis_num_inputs(const struct IminerFis *fis);

/**
 * Run inference on one input vector of length `len`.
 *
 * # Safety
 * `fis` must be live, `inputs` must point to `len` doubles, `out` must be
 * a valid pointer.
 */
enum IminerStatus iminer_fis_infer(const struct IminerFis *fis,
                                   const double *inputs,
                                   uintptr_t len,
                                   double *out);

/**
 * Release a FIS handle; NULL is a no-op.
 *
 * # Safety
 * `fis` must come from `iminer_fis_from_json` and not be freed twice.
 */
void iminer_fis_free(struct IminerFis *fis);

/**
 * Parse a full trained-pipeline bundle (the CLI's model.json). Returns NULL
 * on failure; release with `iminer_bundle_free`.
 *
 * # Safety
 * `json` must be a valid NUL-terminated C string.
 */
struct IminerBundle *iminer_bundle_from_json(const char *json);

/**
 * Rule count of the bundle's FIS.
 *
 * # Safety
 * `bundle` must be a live handle.
 */
uintptr_t iminer_bundle_num_rules(const struct IminerBundle *bundle);

/**
 * Release a bundle handle; NULL is a no-op.
 *
 * # Safety
 * `bundle` must come from `iminer_bundle_from_json` and not be freed twice.
 */
void iminer_bundle_free(struct IminerBundle *bundle);

/**
 * Schweizer-Sklar T-norm T_p(a, b); requires p > 0 and a, b in [0, 1].
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum IminerStatus iminer_tnorm_ss(double a, double b, double p, double *out);

/**
 * Root-mean-square error between two equal-length series.
 *
 * # Safety
 * `pred` and `actual` must point to `len` doubles; `out` must be valid.
 */
enum IminerStatus iminer_rmse(const double *pred, const double *actual, uintptr_t len, double *out);

/**
 * Pearson correlation coefficient between two equal-length series.
 *
 * # Safety
 * `pred` and `actual` must point to `len` doubles; `out` must be valid.
 */
enum IminerStatus iminer_corr_coef(const double *pred,
                                   const double *actual,
                                   uintptr_t len,
                                   double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* IMINER_H */
