#ifndef SEGFDR_H
#define SEGFDR_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SegfdrStatus {
  SEGFDR_STATUS_OK = 0,
  SEGFDR_STATUS_NULL_POINTER = 1,
  SEGFDR_STATUS_INVALID_PARAMETER = 2,
  SEGFDR_STATUS_INVALID_INPUT = 3,
  SEGFDR_STATUS_NUMERIC = 4,
  SEGFDR_STATUS_IO = 5,
  SEGFDR_STATUS_PANIC = 6,
} SegfdrStatus;

/**
 * Which test the p-values and effects come from; pass as the `problem` code.
 */
typedef enum SegfdrProblem {
  SEGFDR_PROBLEM_ONE_SAMPLE_GREATER = 0,
  SEGFDR_PROBLEM_ONE_SAMPLE_TWO_SIDED = 1,
  SEGFDR_PROBLEM_TWO_SAMPLE_GREATER = 2,
  SEGFDR_PROBLEM_TWO_SAMPLE_TWO_SIDED = 3,
} SegfdrProblem;

/**
 * Opaque cache of per-sample-size quadrature models for one test problem.
 * Reuse it across calls to avoid recomputing quadrature nodes.
 */
typedef struct SegfdrModelCache SegfdrModelCache;

/**
 * Opaque, validated set of p-values in (0, 1).
 */
typedef struct SegfdrPValues SegfdrPValues;

/**
 * p-value and effect estimate of one test.
 */
typedef struct SegfdrTestResult {
  double p_value;
  double effect;
} SegfdrTestResult;

/**
 * The four π₀ estimates, all sharing the bootstrap value as initial estimate.
 */
typedef struct SegfdrPi0Suite {
  double bootstrap;
  double average;
  double u;
  double e;
} SegfdrPi0Suite;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or null if the last
 * call succeeded. Valid until the next call into this library on the thread.
 */
const char *segfdr_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *segfdr_version(void);

/**
 * P(χ²_df ≤ x).
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SegfdrStatus segfdr_chi2_cdf(double x, uint32_t df, double *out);

/**
 * P(χ²_df > x).
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SegfdrStatus segfdr_chi2_sf(double x, uint32_t df, double *out);

/**
 * P(F_{d1,d2} ≤ x).
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SegfdrStatus segfdr_f_cdf(double x, uint32_t d1, uint32_t d2, double *out);

/**
 * P(F_{d1,d2} > x).
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SegfdrStatus segfdr_f_sf(double x, uint32_t d1, uint32_t d2, double *out);

/**
 * Likelihood ratio test of one sample against unit mean. Scale the data by
 * the benchmark mean first.
 *
 * # Safety
 * `x` must be valid for `n` reads and `out` for one write.
 */
enum SegfdrStatus segfdr_lrt_one_sample(const double *x,
                                        size_t n,
                                        bool two_sided,
                                        struct SegfdrTestResult *out);

/**
 * Likelihood ratio test comparing the mean of `y` with the mean of `x`.
 *
 * # Safety
 * `x` and `y` must be valid for `nx` and `ny` reads, `out` for one write.
 */
enum SegfdrStatus segfdr_lrt_two_sample(const double *x,
                                        size_t nx,
                                        const double *y,
                                        size_t ny,
                                        bool two_sided,
                                        struct SegfdrTestResult *out);

/**
 * Probability that a non-null p-value with effect `delta` exceeds `lambda`.
 * `n2` is ignored for one-sample problems.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SegfdrStatus segfdr_q_upper(uint32_t problem,
                                 double delta,
                                 double lambda,
                                 uint32_t n1,
                                 uint32_t n2,
                                 double *out);

/**
 * Expected p-value under effect `delta`. `n2` is ignored for one-sample problems.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SegfdrStatus segfdr_expected_nonnull_p(uint32_t problem,
                                            double delta,
                                            uint32_t n1,
                                            uint32_t n2,
                                            double *out);

/**
 * Copy `m` p-values into a new handle. Every value must lie in (0, 1).
 *
 * # Safety
 * `p` must be valid for `m` reads and `out` for one write.
 */
enum SegfdrStatus segfdr_pvalues_new(const double *p, size_t m, struct SegfdrPValues **out);

/**
 * Release a handle from [`segfdr_pvalues_new`]. Null is ignored.
 *
 * # Safety
 * `h` must be null or a live handle, not used afterwards.
 */
void segfdr_pvalues_free(struct SegfdrPValues *h);

/**
 * Number of p-values in the set, or 0 for a null handle.
 *
 * # Safety
 * `h` must be null or a live handle.
 */
size_t segfdr_pvalues_len(const struct SegfdrPValues *h);

/**
 * Storey's estimator at a fixed λ in [0, 1).
 *
 * # Safety
 * `h` must be a live handle and `out` valid for one write.
 */
enum SegfdrStatus segfdr_pi0_storey(const struct SegfdrPValues *h, double lambda, double *out);

/**
 * Bootstrap-tuned Storey estimator. `replicates == 0` selects the exact
 * (closed-form) bootstrap; otherwise resampling with that many draws from `seed`.
 *
 * # Safety
 * `h` must be a live handle and `out` valid for one write.
 */
enum SegfdrStatus segfdr_pi0_bootstrap(const struct SegfdrPValues *h,
                                       size_t replicates,
                                       uint64_t seed,
                                       double *out);

/**
 * Average of Storey estimates over λ in [0.20, 0.50].
 *
 * # Safety
 * `h` must be a live handle and `out` valid for one write.
 */
enum SegfdrStatus segfdr_pi0_average(const struct SegfdrPValues *h, double *out);

/**
 * New model cache for `problem`.
 *
 * # Safety
 * `out` must be valid for one write.
 */
enum SegfdrStatus segfdr_model_cache_new(uint32_t problem, struct SegfdrModelCache **out);

/**
 * Release a handle from [`segfdr_model_cache_new`]. Null is ignored.
 *
 * # Safety
 * `h` must be null or a live handle, not used afterwards.
 */
void segfdr_model_cache_free(struct SegfdrModelCache *h);

/**
 * Bias-corrected estimator U. `effects`, `n1` (and `n2` for two-sample
 * problems) hold one entry per p-value in the same order; `initial` is the
 * initial π₀ estimate, typically from [`segfdr_pi0_bootstrap`].
 *
 * # Safety
 * Handles must be live; arrays valid for as many reads as the p-value set
 * has entries; `n2` may be null for one-sample problems; `out` valid for one write.
 */
enum SegfdrStatus segfdr_pi0_u(struct SegfdrModelCache *cache,
                               const struct SegfdrPValues *h,
                               const double *effects,
                               const uint32_t *n1,
                               const uint32_t *n2,
                               double initial,
                               double *out);

/**
 * Bias-corrected estimator E. Arguments as for [`segfdr_pi0_u`].
 *
 * # Safety
 * As for [`segfdr_pi0_u`].
 */
enum SegfdrStatus segfdr_pi0_e(struct SegfdrModelCache *cache,
                               const struct SegfdrPValues *h,
                               const double *effects,
                               const uint32_t *n1,
                               const uint32_t *n2,
                               double initial,
                               double *out);

/**
 * All four estimators. `replicates` and `seed` select the bootstrap as in
 * [`segfdr_pi0_bootstrap`]; other arguments as for [`segfdr_pi0_u`].
 *
 * # Safety
 * As for [`segfdr_pi0_u`].
 */
enum SegfdrStatus segfdr_pi0_all(struct SegfdrModelCache *cache,
                                 const struct SegfdrPValues *h,
                                 const double *effects,
                                 const uint32_t *n1,
                                 const uint32_t *n2,
                                 size_t replicates,
                                 uint64_t seed,
                                 struct SegfdrPi0Suite *out);

/**
 * Adaptive BH adjusted p-values in input order, capped at 1. `pi0` in (0, 1];
 * pass 1 for the classical procedure. `out` must have room for `out_len`
 * values, at least the size of the set.
 *
 * # Safety
 * `h` must be a live handle and `out` valid for `out_len` writes.
 */
enum SegfdrStatus segfdr_bh_adjust(const struct SegfdrPValues *h,
                                   double pi0,
                                   double *out,
                                   size_t out_len);

/**
 * Adaptive BH rejections at level `q`: writes the count to `count` and, when
 * `mask` is not null, 1 or 0 per p-value in input order.
 *
 * # Safety
 * `h` must be a live handle, `mask` null or valid for `mask_len` writes,
 * `count` valid for one write.
 */
enum SegfdrStatus segfdr_bh_reject(const struct SegfdrPValues *h,
                                   double pi0,
                                   double q,
                                   uint8_t *mask,
                                   size_t mask_len,
                                   size_t *count);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEGFDR_H */
