#ifndef ENERPROF_H
#define ENERPROF_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Status codes. Zero is success; everything else has a message available
 * from [`ep_last_error`].
 */
typedef enum EpStatus {
  EP_STATUS_OK = 0,
  EP_STATUS_NULL_POINTER = 1,
  EP_STATUS_INVALID_INPUT = 2,
  EP_STATUS_INSUFFICIENT_SAMPLES = 3,
  EP_STATUS_EMPTY_RUN = 4,
  EP_STATUS_DEGENERATE = 5,
  EP_STATUS_FIT_FAILED = 6,
  EP_STATUS_BUFFER_TOO_SMALL = 7,
  EP_STATUS_PANIC = 8,
  EP_STATUS_OTHER = 9,
} EpStatus;

typedef enum EpEnergyScale {
  /**
   * Energy term is `E/N`.
   */
  EP_ENERGY_SCALE_LITERAL = 0,
  /**
   * Energy term is `100 * E/N`.
   */
  EP_ENERGY_SCALE_BALANCED = 1,
} EpEnergyScale;

/**
 * A fitted accuracy-versus-energy frontier.
 */
typedef struct EpFrontierFit EpFrontierFit;

/**
 * Power samples in nanoseconds and watts.
 */
typedef struct EpSampleSeries EpSampleSeries;

typedef struct EpMetrics {
  double energy_per_image;
  double throughput;
  double latency;
  double avg_power;
  uint32_t batch_size;
  uint64_t images_processed;
  double wall_time;
} EpMetrics;

typedef struct EpScoreParams {
  /**
   * Energy weight in [0, 1].
   */
  double weight;
  /**
   * Energy normalization in joules.
   */
  double norm;
  /**
   * Accuracy threshold in percent.
   */
  double min_accuracy;
} EpScoreParams;

typedef struct EpFitCoefficients {
  double c1;
  double c2;
  double c3;
  /**
   * RMS residual in accuracy percent.
   */
  double residual;
} EpFitCoefficients;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message on this thread into `buf` (nul terminated,
 * truncated to `len`). Returns the full message length without the nul, or
 * 0 when there is none.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t ep_last_error(char *buf, size_t len);

/**
 * Library version as a static nul-terminated string.
 */
const char *ep_version(void);

struct EpSampleSeries *ep_series_new(void);

/**
 * # Safety
 * `series` must come from [`ep_series_new`] and not be freed yet, or be null.
 */
void ep_series_free(struct EpSampleSeries *series);

/**
 * Appends one sample. Samples may arrive out of order.
 *
 * # Safety
 * `series` must be a live handle.
 */
enum EpStatus ep_series_push(struct EpSampleSeries *series, uint64_t t_ns, double watts);

/**
 * # Safety
 * `series` must be a live handle or null.
 */
size_t ep_series_len(const struct EpSampleSeries *series);

/**
 * Energy in joules over `[t0, t1]` by the trapezoid rule, with power held
 * constant beyond the first and last sample.
 *
 * # Safety
 * `series` must be a live handle; `joules` must be writable.
 */
enum EpStatus ep_series_integrate(const struct EpSampleSeries *series,
                                  uint64_t t0_ns,
                                  uint64_t t1_ns,
                                  double *joules);

/**
 * Metrics for a run that started at `window_start_ns` and completed
 * `n_marks` batches of `batch_size` images at the given times.
 *
 * # Safety
 * `series` must be a live handle, `marks_ns` valid for `n_marks` values and
 * `metrics` writable.
 */
enum EpStatus ep_series_derive(const struct EpSampleSeries *series,
                               uint64_t window_start_ns,
                               const uint64_t *marks_ns,
                               size_t n_marks,
                               uint32_t batch_size,
                               struct EpMetrics *metrics);

/**
 * Accuracy per joule. `*kept` is set to 0 and `*score` left untouched when
 * the accuracy is below the threshold.
 *
 * # Safety
 * `score` and `kept` must be writable.
 */
enum EpStatus ep_ratio_score(double accuracy,
                             double energy,
                             struct EpScoreParams p,
                             double *score,
                             bool *kept);

/**
 * Weighted Manhattan score, higher is better.
 *
 * # Safety
 * `score` must be writable.
 */
enum EpStatus ep_manhattan_score(double accuracy,
                                 double energy,
                                 struct EpScoreParams p,
                                 enum EpEnergyScale scale,
                                 double *score);

/**
 * FLOPs-based energy estimate in joules per image: `flops / peak * tdp`.
 *
 * # Safety
 * `joules` must be writable.
 */
enum EpStatus ep_naive_estimate(double flops, double peak_flops, double tdp, double *joules);

/**
 * # Safety
 * `xs` and `ys` must be valid for `n` values; `r` must be writable.
 */
enum EpStatus ep_pearson(const double *xs, const double *ys, size_t n, double *r);

/**
 * Rank correlation with average ranks for ties.
 *
 * # Safety
 * `xs` and `ys` must be valid for `n` values; `rho` must be writable.
 */
enum EpStatus ep_spearman(const double *xs, const double *ys, size_t n, double *rho);

/**
 * Indices of the non-dominated points (lower energy and higher accuracy
 * are better), in increasing energy. `*count` receives the front size; if
 * it exceeds `capacity` the status is `BufferTooSmall` and nothing is
 * written to `indices`.
 *
 * # Safety
 * `energy` and `accuracy` must be valid for `n` values, `indices` for
 * `capacity` values, and `count` writable.
 */
enum EpStatus ep_pareto_front(const double *energy,
                              const double *accuracy,
                              size_t n,
                              size_t *indices,
                              size_t capacity,
                              size_t *count);

/**
 * Fits `accuracy = c1 * ln(ln(E) + c2) + c3` to at least four points.
 *
 * # Safety
 * `energy` and `accuracy` must be valid for `n` values; `fit` must be
 * writable. The new handle is released with [`ep_frontier_free`].
 */
enum EpStatus ep_frontier_fit(const double *energy,
                              const double *accuracy,
                              size_t n,
                              struct EpFrontierFit **fit);

/**
 * # Safety
 * `fit` must come from [`ep_frontier_fit`] and not be freed yet, or be null.
 */
void ep_frontier_free(struct EpFrontierFit *fit);

/**
 * # Safety
 * `fit` must be a live handle; `coefficients` must be writable.
 */
enum EpStatus ep_frontier_coefficients(const struct EpFrontierFit *fit,
                                       struct EpFitCoefficients *coefficients);

/**
 * Accuracy predicted at `energy` joules per image.
 *
 * # Safety
 * `fit` must be a live handle; `accuracy` must be writable.
 */
enum EpStatus ep_frontier_eval(const struct EpFrontierFit *fit, double energy, double *accuracy);

/**
 * Energy per image the fitted trend needs to reach `target_accuracy`.
 *
 * # Safety
 * `fit` must be a live handle; `energy` must be writable.
 */
enum EpStatus ep_frontier_extrapolate(const struct EpFrontierFit *fit,
                                      double target_accuracy,
                                      double *energy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ENERPROF_H */
