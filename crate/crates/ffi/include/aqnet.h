#ifndef AQNET_H
#define AQNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AqnetStatus {
  AQNET_STATUS_OK = 0,
  AQNET_STATUS_NULL_POINTER = 1,
  AQNET_STATUS_INVALID_UTF8 = 2,
  AQNET_STATUS_DOMAIN = 3,
  AQNET_STATUS_STRUCTURAL = 4,
  AQNET_STATUS_PARSE = 5,
  AQNET_STATUS_BUFFER_TOO_SMALL = 6,
  AQNET_STATUS_PANIC = 7,
} AqnetStatus;

/**
 * Opaque router simulation handle.
 */
typedef struct AqnetRouter AqnetRouter;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; empty after a success.
 * The pointer stays valid until the next library call on the same thread.
 */
const char *aqnet_last_error(void);

/**
 * Releases a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void aqnet_string_free(char *s);

/**
 * Fidelity of a configuration label such as `"5+2/n7"` or `"4+1/u7"`.
 *
 * `p` and `dwell_s` hold `paths` values in arrival order; `t2_s` may be
 * infinite.
 *
 * # Safety
 * `label` must be a NUL-terminated string, `p` and `dwell_s` must point to
 * `paths` doubles and `out` must be writable.
 */
enum AqnetStatus aqnet_fidelity(const char *label,
                                const double *p,
                                const double *dwell_s,
                                size_t paths,
                                double t2_s,
                                double *out);

/**
 * Values of p2 in `[lo, hi]` where the two configurations have equal
 * fidelity on a two-path route with path-1 probability `p1`, no storage
 * noise. Writes up to `capacity` roots and their total count.
 *
 * # Safety
 * Strings must be NUL-terminated, `roots` must hold `capacity` doubles (it may
 * be null when `capacity` is 0) and `count` must be writable.
 */
enum AqnetStatus aqnet_crossing_point(const char *a,
                                      const char *b,
                                      double p1,
                                      double lo,
                                      double hi,
                                      double *roots,
                                      size_t capacity,
                                      size_t *count);

/**
 * Assignment tables of a TOML scenario as CSV.
 *
 * # Safety
 * `scenario_toml` must be NUL-terminated and `csv_out` writable.
 */
enum AqnetStatus aqnet_tables_csv(const char *scenario_toml, char **csv_out);

/**
 * Creates a router from a TOML scenario.
 *
 * # Safety
 * `scenario_toml` must be NUL-terminated and `out` writable.
 */
enum AqnetStatus aqnet_router_new(const char *scenario_toml, struct AqnetRouter **out);

/**
 * Releases a router. Null is ignored.
 *
 * # Safety
 * `router` must come from [`aqnet_router_new`] and not have been freed.
 */
void aqnet_router_free(struct AqnetRouter *router);

/**
 * Queues a request in the current slot. `payload` is `qrs:N` or
 * `unencoded:DxSIZE`; `regime` may be null for greedy; a negative
 * `min_fidelity` means no threshold. The resulting events are returned as
 * JSON lines.
 *
 * # Safety
 * `router` must be a live handle, strings NUL-terminated (except a null
 * `regime`) and `events_out` writable.
 */
enum AqnetStatus aqnet_router_submit(struct AqnetRouter *router,
                                     const char *user,
                                     const char *payload,
                                     const char *regime,
                                     double min_fidelity,
                                     char **events_out);

/**
 * Processes the queue for the current slot, then advances one slot. The
 * slot's events are returned as JSON lines.
 *
 * # Safety
 * `router` must be a live handle and `events_out` writable.
 */
enum AqnetStatus aqnet_router_step(struct AqnetRouter *router, char **events_out);

/**
 * Number of requests waiting in the router queue.
 *
 * # Safety
 * `router` must be a live handle and `out` writable.
 */
enum AqnetStatus aqnet_router_queue_len(const struct AqnetRouter *router, size_t *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AQNET_H */
