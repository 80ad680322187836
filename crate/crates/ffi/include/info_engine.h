#ifndef INFO_ENGINE_H
#define INFO_ENGINE_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum IeMetadataMode {
  IE_METADATA_MODE_INLINE = 0,
  IE_METADATA_MODE_REFERENCE = 1,
} IeMetadataMode;

typedef enum IeScenario {
  IE_SCENARIO_A = 0,
  IE_SCENARIO_B = 1,
} IeScenario;

typedef enum IeStatus {
  IE_STATUS_OK = 0,
  /**
   * A null pointer, invalid UTF-8 or an out-of-range enum value.
   */
  IE_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The supplied document or value failed validation.
   */
  IE_STATUS_VALIDATION = 2,
  /**
   * Unknown device, topic or metadata key.
   */
  IE_STATUS_NOT_FOUND = 3,
  IE_STATUS_SOURCE_UNAVAILABLE = 4,
  IE_STATUS_CORRUPT_PAYLOAD = 5,
  IE_STATUS_RETENTION_VIOLATION = 6,
  /**
   * A series or data-type problem in a transform or trajectory.
   */
  IE_STATUS_DATA = 7,
  IE_STATUS_IO = 8,
  IE_STATUS_PANIC = 9,
} IeStatus;

/**
 * An engine with its registry, buffer and serving store.
 */
typedef struct IeEngine IeEngine;

/**
 * A cursor over one topic of an engine's buffer.
 */
typedef struct IeSubscription IeSubscription;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * call into this library on the same thread.
 */
const char *ie_last_error_message(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void ie_string_free(char *s);

/**
 * Storage for one signal as `"<day>/day, <month>/month, <year>/year"`.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum IeStatus ie_estimate_volume(uint64_t sample_bytes, double rate_hz, char **out);

/**
 * Create an in-memory engine.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum IeStatus ie_engine_new(struct IeEngine **out);

/**
 * Open or create an engine rooted in data directory `dir`.
 *
 * # Safety
 * `dir` must be a NUL-terminated string and `out` a valid pointer.
 */
enum IeStatus ie_engine_open(const char *dir, struct IeEngine **out);

/**
 * Release an engine. Null is ignored.
 *
 * # Safety
 * `engine` must come from `ie_engine_new` or `ie_engine_open` and not have
 * been freed. Subscriptions over it must not be used afterwards.
 */
void ie_engine_free(struct IeEngine *engine);

/**
 * Attach a simulated device described by a device-file JSON document.
 *
 * # Safety
 * `engine` must be live; `name` and `device_json` NUL-terminated strings.
 */
enum IeStatus ie_engine_add_sim_device(struct IeEngine *engine,
                                       const char *name,
                                       const char *device_json);

/**
 * Register the devices of a query-model document. `out_json` receives the
 * registered device records as a JSON array.
 *
 * # Safety
 * `engine` must be live, `query_model_json` NUL-terminated and `out_json`
 * a valid pointer.
 */
enum IeStatus ie_engine_register(struct IeEngine *engine,
                                 const char *query_model_json,
                                 int64_t now,
                                 char **out_json);

/**
 * Poll the active schedule on virtual time over `[from, until]`. `mode` is
 * an [`IeMetadataMode`] value.
 * `out_json` receives the ingest report.
 *
 * # Safety
 * `engine` must be live and `out_json` a valid pointer.
 */
enum IeStatus ie_engine_run(struct IeEngine *engine,
                            int32_t mode,
                            int64_t from,
                            int64_t until,
                            char **out_json);

/**
 * Buffer topics as a JSON array of `{name, retentionMillis, earliestOffset, nextOffset}`.
 *
 * # Safety
 * `engine` must be live and `out_json` a valid pointer.
 */
enum IeStatus ie_engine_topics(const struct IeEngine *engine, char **out_json);

/**
 * Append an encoded envelope to its topic. The stored copy carries the
 * offset it landed at, which is also written to `out_offset`.
 *
 * # Safety
 * `engine` must be live, `payload` valid for `len` bytes and `out_offset`
 * a valid pointer.
 */
enum IeStatus ie_engine_append(const struct IeEngine *engine,
                               const uint8_t *payload,
                               size_t len,
                               uint64_t *out_offset);

/**
 * Subscribe to `topic` starting at `from_offset`.
 *
 * # Safety
 * `engine` must be live, `topic` NUL-terminated and `out` a valid pointer.
 */
enum IeStatus ie_subscribe(const struct IeEngine *engine,
                           const char *topic,
                           uint64_t from_offset,
                           struct IeSubscription **out);

/**
 * Up to `max` envelopes from the subscription's cursor as a JSON array,
 * advancing the cursor. An empty array means the subscriber is caught up.
 *
 * # Safety
 * `sub` and `engine` must be live, `sub` created over `engine`, and
 * `out_json` a valid pointer.
 */
enum IeStatus ie_subscription_next_json(struct IeSubscription *sub,
                                        const struct IeEngine *engine,
                                        size_t max,
                                        char **out_json);

/**
 * Next offset the subscription will read.
 *
 * # Safety
 * `sub` must be live or null.
 */
uint64_t ie_subscription_cursor(const struct IeSubscription *sub);

/**
 * Release a subscription. Null is ignored.
 *
 * # Safety
 * `sub` must come from `ie_subscribe` and not have been freed.
 */
void ie_subscription_free(struct IeSubscription *sub);

/**
 * Align topics onto a grid and export the trajectory as CSV. The query is
 * JSON: `{"topics": [...], "t0", "t1", "gridMillis", "method": "linear"|"hold"}`.
 *
 * # Safety
 * `engine` must be live, `query_json` NUL-terminated and `out_csv` a valid
 * pointer.
 */
enum IeStatus ie_engine_trajectory_csv(const struct IeEngine *engine,
                                       const char *query_json,
                                       char **out_csv);

/**
 * Run the message-count bench and return its report as JSON. `scenario`
 * is an [`IeScenario`] value.
 *
 * # Safety
 * `out_json` must be a valid pointer.
 */
enum IeStatus ie_bench(int32_t scenario, uint32_t n, uint32_t m, uint32_t k, char **out_json);

/**
 * Decode an encoded envelope and return its JSON body.
 *
 * # Safety
 * `payload` must be valid for `len` bytes and `out_json` a valid pointer.
 */
enum IeStatus ie_decode_envelope_json(const uint8_t *payload, size_t len, char **out_json);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INFO_ENGINE_H */
