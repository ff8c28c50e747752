#ifndef SQLREFLECT_H
#define SQLREFLECT_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SrStatus {
  SR_STATUS_OK = 0,
  SR_STATUS_NULL_ARGUMENT = 1,
  SR_STATUS_INVALID_UTF8 = 2,
  SR_STATUS_INVALID_ARGUMENT = 3,
  SR_STATUS_SESSION_ERROR = 4,
  SR_STATUS_IO = 5,
  SR_STATUS_INTERNAL = 6,
} SrStatus;

/**
 * A live session driven by the mock backend.
 */
typedef struct SrSession SrSession;

/**
 * Message for the last failed call on this thread, or null. Valid until
 * the next call into this library on the same thread.
 */
const char *sr_last_error(void);

/**
 * Release a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void sr_string_free(char *s);

/**
 * Classify `sql` (one or more statements). Writes a JSON array of
 * matches to `out_json`.
 *
 * # Safety
 * `sql` must be a NUL-terminated string; `out_json` a writable pointer.
 */
enum SrStatus sr_classify(const char *sql, char **out_json);

/**
 * Syntax-check one statement. `out_pass` receives 1 or 0; on 0 the
 * reason is written to `out_reason` when that pointer is not null.
 *
 * # Safety
 * `sql` must be a NUL-terminated string; `out_pass` writable;
 * `out_reason` null or writable.
 */
enum SrStatus sr_check_syntax(const char *sql, int32_t *out_pass, char **out_reason);

/**
 * Create a session with spacing `tau_s` seconds. Free with
 * [`sr_session_free`].
 *
 * # Safety
 * `session_id` must be a NUL-terminated string; `out` writable.
 */
enum SrStatus sr_session_new(const char *session_id, double tau_s, struct SrSession **out);

/**
 * # Safety
 * `session` must be null or come from [`sr_session_new`], freed once.
 */
void sr_session_free(struct SrSession *session);

/**
 * Submit a command at `ts` seconds. Writes the JSON outcome (decision
 * and delivered reflection per trigger) to `out_json`.
 *
 * # Safety
 * `session` from [`sr_session_new`]; `sql` NUL-terminated; `out_json`
 * writable.
 */
enum SrStatus sr_session_submit(struct SrSession *session,
                                const char *sql,
                                double ts,
                                char **out_json);

/**
 * Move to `task` at `ts`. Writes the JSON array of reflections released
 * by the move (non-empty only when entering task 3).
 *
 * # Safety
 * `session` from [`sr_session_new`]; `out_json` writable.
 */
enum SrStatus sr_session_advance_task(struct SrSession *session,
                                      uint8_t task,
                                      double ts,
                                      char **out_json);

/**
 * Replay a JSONL command log. `scheduling` 0 fires every trigger
 * immediately. Writes the JSON report to `out_json`.
 *
 * # Safety
 * `path` NUL-terminated; `out_json` writable.
 */
enum SrStatus sr_replay_log(const char *path, double tau_s, int32_t scheduling, char **out_json);

#endif  /* SQLREFLECT_H */
