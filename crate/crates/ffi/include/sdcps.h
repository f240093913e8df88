#ifndef SDCPS_H
#define SDCPS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum SdcpsStatus {
  SDCPS_STATUS_OK = 0,
  SDCPS_STATUS_NULL_POINTER = 1,
  SDCPS_STATUS_INVALID_UTF8 = 2,
  SDCPS_STATUS_IO = 3,
  SDCPS_STATUS_CONFIG_PARSE = 4,
  SDCPS_STATUS_CONFIG_INVALID = 5,
  SDCPS_STATUS_UNKNOWN_SCENARIO = 6,
  SDCPS_STATUS_INVALID_ARGUMENT = 7,
  SDCPS_STATUS_OUT_OF_RANGE = 8,
  SDCPS_STATUS_INTERNAL = 9,
} SdcpsStatus;

typedef enum SdcpsFormat {
  SDCPS_FORMAT_CSV = 0,
  SDCPS_FORMAT_JSONL = 1,
} SdcpsFormat;

/**
 * Parsed and validated system configuration.
 */
typedef struct SdcpsConfig SdcpsConfig;

/**
 * Metrics records produced by one scenario run.
 */
typedef struct SdcpsReport SdcpsReport;

/**
 * One metrics row. `scenario` is 1 to 4.
 */
typedef struct SdcpsRecord {
  uint32_t scenario;
  uint64_t n_local;
  uint64_t switches_per_local;
  uint64_t hosts_per_switch;
  uint64_t seed;
  uint64_t sim_time;
  uint64_t requests_served;
  uint64_t config_work;
  double config_wall_ms;
  double test_wall_ms;
  uint64_t requests_issued;
  uint64_t requests_lost;
} SdcpsRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *sdcps_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sdcps_version(void);

/**
 * Default configuration.
 *
 * # Safety
 * `out` must be null or point to writable storage for a pointer.
 */
enum SdcpsStatus sdcps_config_default(struct SdcpsConfig **out);

/**
 * Reads and validates a TOML config file.
 *
 * # Safety
 * `path` must be null or a NUL-terminated string; `out` must be null or writable.
 */
enum SdcpsStatus sdcps_config_load(const char *path, struct SdcpsConfig **out);

/**
 * Parses and validates TOML config text.
 *
 * # Safety
 * `text` must be null or a NUL-terminated string; `out` must be null or writable.
 */
enum SdcpsStatus sdcps_config_parse(const char *text, struct SdcpsConfig **out);

/**
 * # Safety
 * `config` must be null or a handle from this library not yet freed.
 */
void sdcps_config_free(struct SdcpsConfig *config);

/**
 * Runs `scenario` ("Sc1" to "Sc4") for every seed in `first_seed..=last_seed`.
 * `threads` of 0 uses every available CPU.
 *
 * # Safety
 * `config` must be null or a live handle, `scenario` null or NUL-terminated,
 * and `out` null or writable.
 */
enum SdcpsStatus sdcps_run(const struct SdcpsConfig *config,
                           const char *scenario,
                           uint64_t first_seed,
                           uint64_t last_seed,
                           uint32_t threads,
                           struct SdcpsReport **out);

/**
 * Number of records in `report`; 0 for null.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t sdcps_report_len(const struct SdcpsReport *report);

/**
 * Copies record `index` into `out`.
 *
 * # Safety
 * `report` must be null or a live handle; `out` null or writable.
 */
enum SdcpsStatus sdcps_report_record(const struct SdcpsReport *report,
                                     size_t index,
                                     struct SdcpsRecord *out);

/**
 * Renders the report as CSV or JSON lines. Free the string with
 * [`sdcps_string_free`].
 *
 * # Safety
 * `report` must be null or a live handle; `out` null or writable.
 */
enum SdcpsStatus sdcps_report_render(const struct SdcpsReport *report,
                                     enum SdcpsFormat format,
                                     char **out);

/**
 * # Safety
 * `report` must be null or a handle from this library not yet freed.
 */
void sdcps_report_free(struct SdcpsReport *report);

/**
 * # Safety
 * `s` must be null or a string returned by this library not yet freed.
 */
void sdcps_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SDCPS_H */
