#ifndef OSCRESP_H
#define OSCRESP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum OscrespStatus {
  OSCRESP_STATUS_OK = 0,
  OSCRESP_STATUS_NULL_POINTER = 1,
  OSCRESP_STATUS_INVALID_UTF8 = 2,
  OSCRESP_STATUS_INVALID_ARGUMENT = 3,
  OSCRESP_STATUS_INVALID_GRID = 4,
  OSCRESP_STATUS_INCOMMENSURATE = 5,
  OSCRESP_STATUS_TRUNCATION = 6,
  OSCRESP_STATUS_NUMERICAL = 7,
  OSCRESP_STATUS_PARSE = 8,
  OSCRESP_STATUS_UNKNOWN_SUITE = 9,
  OSCRESP_STATUS_IO = 10,
  OSCRESP_STATUS_BUFFER_TOO_SMALL = 11,
  OSCRESP_STATUS_PANIC = 12,
} OscrespStatus;

/**
 * Which oscillator kernel to sample.
 */
typedef enum OscrespKernelKind {
  OSCRESP_KERNEL_KIND_RETARDED = 0,
  OSCRESP_KERNEL_KIND_CONTRACTION = 1,
  OSCRESP_KERNEL_KIND_FEYNMAN = 2,
  OSCRESP_KERNEL_KIND_FEYNMAN_CONJ = 3,
  OSCRESP_KERNEL_KIND_COMMUTATOR = 4,
} OscrespKernelKind;

/**
 * Configuration of a verification run.
 */
typedef struct OscrespConfig OscrespConfig;

/**
 * A kernel sampled on the lags of a periodic grid.
 */
typedef struct OscrespKernel OscrespKernel;

/**
 * Oscillator parameters (mass, frequency, hbar).
 */
typedef struct OscrespParams OscrespParams;

/**
 * The outcome of a verification run.
 */
typedef struct OscrespReport OscrespReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null after a success.
 * The pointer stays valid until the next call into the library from this thread.
 */
const char *oscresp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *oscresp_version(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a pointer obtained from this library and not yet freed.
 */
void oscresp_string_free(char *s);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum OscrespStatus oscresp_params_new(double mass,
                                      double omega0,
                                      double hbar,
                                      struct OscrespParams **out);

/**
 * # Safety
 * `p` must be null or a handle from [`oscresp_params_new`] not yet freed.
 */
void oscresp_params_free(struct OscrespParams *p);

/**
 * Samples a kernel on an `n`-point grid with `omega0` on DFT bin `bin`.
 *
 * # Safety
 * `params` must be a live handle and `out` a valid pointer.
 */
enum OscrespStatus oscresp_kernel_new(const struct OscrespParams *params,
                                      size_t n,
                                      size_t bin,
                                      enum OscrespKernelKind kind,
                                      struct OscrespKernel **out);

/**
 * Samples a kernel on an explicit grid step; `omega0` need not sit on a bin.
 *
 * # Safety
 * `params` must be a live handle and `out` a valid pointer.
 */
enum OscrespStatus oscresp_kernel_new_loose(const struct OscrespParams *params,
                                            size_t n,
                                            double dt,
                                            enum OscrespKernelKind kind,
                                            struct OscrespKernel **out);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `k` must be null or a live kernel handle.
 */
size_t oscresp_kernel_len(const struct OscrespKernel *k);

/**
 * Grid step of the kernel, or NaN for a null handle.
 *
 * # Safety
 * `k` must be null or a live kernel handle.
 */
double oscresp_kernel_dt(const struct OscrespKernel *k);

/**
 * Copies the samples into `re` and `im`, each of capacity `len`.
 * Sample `k` sits at lag `(k - n/2) dt`.
 *
 * # Safety
 * `k` must be a live handle; `re` and `im` must point to `len` writable doubles.
 */
enum OscrespStatus oscresp_kernel_values(const struct OscrespKernel *k,
                                         double *re,
                                         double *im,
                                         size_t len);

/**
 * # Safety
 * `k` must be null or a handle from this library not yet freed.
 */
void oscresp_kernel_free(struct OscrespKernel *k);

/**
 * Default configuration.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum OscrespStatus oscresp_config_default(struct OscrespConfig **out);

/**
 * Configuration parsed from JSON text; omitted fields take their defaults.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum OscrespStatus oscresp_config_from_json(const char *json, struct OscrespConfig **out);

/**
 * # Safety
 * `cfg` must be a live config handle.
 */
enum OscrespStatus oscresp_config_set_seed(struct OscrespConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be null or a handle from this library not yet freed.
 */
void oscresp_config_free(struct OscrespConfig *cfg);

/**
 * Runs the named suite (`spectral`, `kernels`, `wick`, `functional`, `driven`,
 * `charged`, `field` or `all`). A null `cfg` uses the defaults.
 *
 * # Safety
 * `cfg` must be null or live, `suite` NUL-terminated, `out` valid.
 */
enum OscrespStatus oscresp_run_suite(const struct OscrespConfig *cfg,
                                     const char *suite,
                                     struct OscrespReport **out);

/**
 * 1 if every gating row passed, 0 otherwise or for a null handle.
 *
 * # Safety
 * `r` must be null or a live report handle.
 */
int32_t oscresp_report_passed(const struct OscrespReport *r);

/**
 * # Safety
 * `r` must be null or a live report handle.
 */
size_t oscresp_report_row_count(const struct OscrespReport *r);

/**
 * Residual and pass flag of row `index`.
 *
 * # Safety
 * `r` must be a live handle; `residual` and `pass` must be valid pointers.
 */
enum OscrespStatus oscresp_report_row(const struct OscrespReport *r,
                                      size_t index,
                                      double *residual,
                                      int32_t *pass);

/**
 * The report as JSON; release with [`oscresp_string_free`].
 *
 * # Safety
 * `r` must be a live handle and `out` a valid pointer.
 */
enum OscrespStatus oscresp_report_to_json(const struct OscrespReport *r, char **out);

/**
 * # Safety
 * `r` must be null or a handle from this library not yet freed.
 */
void oscresp_report_free(struct OscrespReport *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OSCRESP_H */
