#ifndef EXTNLS_H
#define EXTNLS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes of every fallible call.
 */
typedef enum ExtnlsStatus {
  EXTNLS_STATUS_OK = 0,
  EXTNLS_STATUS_NULL_POINTER = 1,
  EXTNLS_STATUS_INVALID_UTF8 = 2,
  EXTNLS_STATUS_INVALID_MANIFEST = 3,
  EXTNLS_STATUS_OUT_OF_RANGE = 4,
  EXTNLS_STATUS_RUN_FAILED = 5,
  EXTNLS_STATUS_IO = 6,
  EXTNLS_STATUS_PANIC = 7,
} ExtnlsStatus;

/**
 * A parsed and validated run manifest.
 */
typedef struct ExtnlsManifest ExtnlsManifest;

/**
 * The outcome of one scenario run.
 */
typedef struct ExtnlsRun ExtnlsRun;

/**
 * One row of the diagnostics series.
 */
typedef struct ExtnlsRecord {
  double time;
  double mass;
  double energy;
  double pc_energy;
  double strauss_ratio;
  double sup_weighted_amp;
  double h1;
  double h2;
  double h4;
  double linf;
  double outer_mass_fraction;
  bool valid;
} ExtnlsRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Version of the library as a static NUL-terminated string.
 */
const char *extnls_version(void);

/**
 * Message of the last failed call on this thread, or null. The pointer stays
 * valid until the next call into the library from the same thread.
 */
const char *extnls_last_error(void);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be freed twice.
 */
void extnls_string_free(char *s);

/**
 * Parses a TOML manifest.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `out` must be writable.
 */
enum ExtnlsStatus extnls_manifest_from_toml(const char *toml, struct ExtnlsManifest **out);

/**
 * Reads and parses a TOML manifest file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum ExtnlsStatus extnls_manifest_from_path(const char *path, struct ExtnlsManifest **out);

/**
 * Serializes a manifest back to TOML (defaults filled in).
 *
 * # Safety
 * `manifest` must be a live handle; `out` must be writable.
 */
enum ExtnlsStatus extnls_manifest_to_toml(const struct ExtnlsManifest *manifest, char **out);

/**
 * Overrides the manifest seed.
 *
 * # Safety
 * `manifest` must be a live handle.
 */
enum ExtnlsStatus extnls_manifest_set_seed(struct ExtnlsManifest *manifest, uint64_t seed);

/**
 * Releases a manifest. Null is ignored.
 *
 * # Safety
 * `manifest` must come from this library and not be freed twice.
 */
void extnls_manifest_free(struct ExtnlsManifest *manifest);

/**
 * Runs the manifest's scenario. A run that finishes with failed verdicts or
 * anomalies still returns `EXTNLS_STATUS_OK`; inspect
 * [`extnls_run_exit_code`].
 *
 * # Safety
 * `manifest` must be a live handle; `out` must be writable.
 */
enum ExtnlsStatus extnls_run(const struct ExtnlsManifest *manifest, struct ExtnlsRun **out);

/**
 * Releases a run. Null is ignored.
 *
 * # Safety
 * `run` must come from this library and not be freed twice.
 */
void extnls_run_free(struct ExtnlsRun *run);

/**
 * 0 all verdicts pass, 2 a verdict fails, 3 a runtime anomaly.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum ExtnlsStatus extnls_run_exit_code(const struct ExtnlsRun *run, int32_t *out);

/**
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum ExtnlsStatus extnls_run_verdict_count(const struct ExtnlsRun *run, size_t *out);

/**
 * Name, outcome and detail of verdict `index`. `name` and `detail` may be
 * null when not wanted; otherwise they receive strings to free.
 *
 * # Safety
 * `run` must be a live handle; non-null out-pointers must be writable.
 */
enum ExtnlsStatus extnls_run_verdict(const struct ExtnlsRun *run,
                                     size_t index,
                                     bool *pass,
                                     char **name,
                                     char **detail);

/**
 * Number of rows in the main diagnostics series.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum ExtnlsStatus extnls_run_record_count(const struct ExtnlsRun *run, size_t *out);

/**
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum ExtnlsStatus extnls_run_record(const struct ExtnlsRun *run,
                                    size_t index,
                                    struct ExtnlsRecord *out);

/**
 * The main diagnostics series in the CSV format written by the CLI.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum ExtnlsStatus extnls_run_csv(const struct ExtnlsRun *run, char **out);

/**
 * The JSON report (without the list of written files).
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum ExtnlsStatus extnls_run_report_json(const struct ExtnlsRun *run, char **out);

/**
 * Writes the CSV files and the JSON report into `dir`, creating it.
 *
 * # Safety
 * `run` must be a live handle; `dir` a NUL-terminated string.
 */
enum ExtnlsStatus extnls_run_write(const struct ExtnlsRun *run, const char *dir);

/**
 * Checks the compatibility conditions of a TOML data spec (the format of
 * `extnls compat`).
 *
 * # Safety
 * `spec` must be a NUL-terminated string; `compatible` must be writable.
 */
enum ExtnlsStatus extnls_compat_check(const char *spec, bool *compatible);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EXTNLS_H */
