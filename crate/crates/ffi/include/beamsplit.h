#ifndef BEAMSPLIT_H
#define BEAMSPLIT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of a library call.
typedef enum BsStatus {
  BS_STATUS_OK = 0,
  BS_STATUS_NULL_POINTER = 1,
  BS_STATUS_INVALID_UTF8 = 2,
  BS_STATUS_CONFIG_ERROR = 3,
  BS_STATUS_RUNTIME_ERROR = 4,
  BS_STATUS_UNKNOWN_COUNTER = 5,
  BS_STATUS_UNDEFINED = 6,
  BS_STATUS_PANIC = 7,
} BsStatus;

// Validated experiment configuration.
typedef struct BsConfig BsConfig;

// Completed simulation with its analysis.
typedef struct BsRun BsRun;

// Zero-delay correlation summary. Fractions are NaN when no pairs were
// counted.
typedef struct BsCorrelation {
  double g2_cross;
  double g2_same;
  double bunching_fraction;
  double same_side_pair_fraction;
} BsCorrelation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The caller
// owns the returned string.
char *bs_last_error(void);

// # Safety
// `s` must be NULL or a string returned by this library, freed once.
void bs_string_free(char *s);

// Library version as a static NUL-terminated string.
const char *bs_version(void);

// Parses configuration text in `key = value` format.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum BsStatus bs_config_parse(const char *text, struct BsConfig **out);

// Overrides one key, with the same rules as the file format.
//
// # Safety
// `config` must be a live handle; `key` and `value` NUL-terminated strings.
enum BsStatus bs_config_set(struct BsConfig *config, const char *key, const char *value);

// The effective configuration in file format. The caller owns the string.
//
// # Safety
// `config` must be NULL or a live handle.
char *bs_config_to_text(const struct BsConfig *config);

// # Safety
// `config` must be NULL or a handle from [`bs_config_parse`], freed once.
void bs_config_free(struct BsConfig *config);

// Closed-form rate (per second) of one counter, e.g. `"pairs:A'B'"`.
//
// # Safety
// `config` must be a live handle, `counter` a NUL-terminated string and
// `out` writable.
enum BsStatus bs_predict_rate(const struct BsConfig *config, const char *counter, double *out);

// Runs the simulation. Report files are written when the configuration
// sets `output_dir`.
//
// # Safety
// `config` must be a live handle and `out` writable.
enum BsStatus bs_run(const struct BsConfig *config, struct BsRun **out);

// Count of one counter, e.g. `"singles:A'"` or `"triples:A'A''B'"`.
//
// # Safety
// `run` must be a live handle, `counter` a NUL-terminated string and `out`
// writable.
enum BsStatus bs_run_count(const struct BsRun *run, const char *counter, uint64_t *out);

// Acquisition time of the run in seconds, or NaN for a NULL handle.
//
// # Safety
// `run` must be NULL or a live handle.
double bs_run_acquisition_s(const struct BsRun *run);

// # Safety
// `run` must be a live handle and `out` writable.
enum BsStatus bs_run_correlation(const struct BsRun *run, struct BsCorrelation *out);

// The tally in CSV form. The caller owns the string.
//
// # Safety
// `run` must be NULL or a live handle.
char *bs_run_tally_csv(const struct BsRun *run);

// # Safety
// `run` must be NULL or a handle from [`bs_run`], freed once.
void bs_run_free(struct BsRun *run);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEAMSPLIT_H */
