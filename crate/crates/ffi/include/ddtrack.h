#ifndef DDTRACK_H
#define DDTRACK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DdtNoise {
  DDT_NOISE_UNIFORM = 0,
  DDT_NOISE_GAUSSIAN = 1,
} DdtNoise;

typedef enum DdtStatus {
  DDT_STATUS_OK = 0,
  // Internal failure, including caught panics.
  DDT_STATUS_FAILURE = 1,
  // Bad argument, configuration, input file or data.
  DDT_STATUS_CONFIG = 2,
  DDT_STATUS_INFEASIBLE = 3,
  // Synthesis finished but the stability certificate failed. The report
  // is still returned.
  DDT_STATUS_UNSTABLE = 4,
  DDT_STATUS_NULL_ARGUMENT = 5,
} DdtStatus;

typedef struct DdtController DdtController;

typedef struct DdtReport DdtReport;

// A loaded design: plants, spectra, weights and settings.
typedef struct DdtSpec DdtSpec;

typedef struct DdtSimMetrics {
  double sigma3_e_m;
  double sigma3_e_pct;
  double max_abs_ycp_m;
  double var_ycp_m2;
  double var_e_m2;
} DdtSimMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or an empty string. The
// pointer stays valid until the next failing call on the same thread.
const char *ddt_last_error(void);

// Library version as a static string.
const char *ddt_version(void);

// Loads `design.json` and its referenced files. `plants_path` may be NULL,
// in which case the config's `plants` entry is used.
//
// # Safety
// Path arguments must be NUL-terminated strings or NULL; `out` must be
// writable.
enum DdtStatus ddt_spec_load(const char *config_path,
                             const char *plants_path,
                             struct DdtSpec **out);

// # Safety
// `spec` must come from `ddt_spec_load` and not be used afterwards.
void ddt_spec_free(struct DdtSpec *spec);

// Number of plant cases, or 0 for NULL.
//
// # Safety
// `spec` must be a live handle or NULL.
size_t ddt_spec_num_cases(const struct DdtSpec *spec);

// Number of frequency points, or 0 for NULL.
//
// # Safety
// `spec` must be a live handle or NULL.
size_t ddt_spec_num_points(const struct DdtSpec *spec);

// Overrides the controller order and iteration count. Zero keeps the
// current value.
//
// # Safety
// `spec` must be a live handle.
enum DdtStatus ddt_spec_set_order(struct DdtSpec *spec, size_t order, size_t n_iter);

// Runs the full synthesis. Returns `Unstable` with a valid report when the
// final controller fails the stability certificate.
//
// # Safety
// `spec` must be a live handle; `out` must be writable.
enum DdtStatus ddt_synthesize(const struct DdtSpec *spec, struct DdtReport **out);

// # Safety
// `report` must come from `ddt_synthesize` and not be used afterwards.
void ddt_report_free(struct DdtReport *report);

// Copies the objective trace into `buf` (up to `cap` values) and returns
// its full length.
//
// # Safety
// `report` must be a live handle; `buf` must hold `cap` doubles or be NULL
// with `cap == 0`.
size_t ddt_report_objective_trace(const struct DdtReport *report, double *buf, size_t cap);

// Smallest audited H∞ margin, NaN for NULL.
//
// # Safety
// `report` must be a live handle or NULL.
double ddt_report_min_margin(const struct DdtReport *report);

// Report as a JSON string, freed with `ddt_string_free`.
//
// # Safety
// `report` must be a live handle; `out` must be writable.
enum DdtStatus ddt_report_json(const struct DdtReport *report, char **out);

// # Safety
// `s` must come from this library and not be used afterwards.
void ddt_string_free(char *s);

// Copies the synthesized controller into a new handle.
//
// # Safety
// `report` must be a live handle; `out` must be writable.
enum DdtStatus ddt_report_controller(const struct DdtReport *report, struct DdtController **out);

// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum DdtStatus ddt_controller_load(const char *path, struct DdtController **out);

// Writes the controller JSON atomically.
//
// # Safety
// `k` must be a live handle; `path` a NUL-terminated string.
enum DdtStatus ddt_controller_save(const struct DdtController *k, const char *path);

// # Safety
// `k` must come from this library and not be used afterwards.
void ddt_controller_free(struct DdtController *k);

// Controller order, or 0 for NULL.
//
// # Safety
// `k` must be a live handle or NULL.
size_t ddt_controller_order(const struct DdtController *k);

// Evaluates `X_vcm`, `X_pzt` and `Y` at `z = exp(j 2 pi f ts)`. Real and
// imaginary parts go to `re[0..3]` and `im[0..3]`.
//
// # Safety
// `k` must be a live handle; `re` and `im` must each hold 3 doubles.
enum DdtStatus ddt_controller_eval(const struct DdtController *k,
                                   double freq_hz,
                                   double *re,
                                   double *im);

// Simulates plant case `case_index` (0-based) of `spec` under controller `k`.
//
// # Safety
// Handles must be live; `out` must be writable.
enum DdtStatus ddt_simulate(const struct DdtSpec *spec,
                            const struct DdtController *k,
                            size_t case_index,
                            uint64_t seed,
                            size_t samples,
                            enum DdtNoise noise,
                            double track_width_m,
                            struct DdtSimMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DDTRACK_H */
