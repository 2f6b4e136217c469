#ifndef COMBLAB_H
#define COMBLAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ComblabStatus {
  COMBLAB_STATUS_OK = 0,
  /**
   * The object was checked and found invalid.
   */
  COMBLAB_STATUS_REJECTED = 1,
  COMBLAB_STATUS_NULL_POINTER = 2,
  COMBLAB_STATUS_INVALID_UTF8 = 3,
  COMBLAB_STATUS_PARSE = 4,
  COMBLAB_STATUS_INVALID_INPUT = 5,
  COMBLAB_STATUS_NUMERICAL = 6,
  COMBLAB_STATUS_PANIC = 7,
} ComblabStatus;

typedef enum ComblabMode {
  /**
   * Operational distance, half the trace norm of the aligned difference.
   */
  COMBLAB_MODE_OP = 0,
  /**
   * Discrimination distance.
   */
  COMBLAB_MODE_DISC = 1,
} ComblabMode;

/**
 * Parsed JSON document.
 */
typedef struct ComblabDocument ComblabDocument;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failure on this thread; empty after a success.
 * The pointer stays valid until the next call into the library.
 */
const char *comblab_last_error(void);

/**
 * # Safety
 * `s` must come from this library or be null.
 */
void comblab_string_free(char *s);

/**
 * # Safety
 * `d` must come from this library or be null.
 */
void comblab_document_free(struct ComblabDocument *d);

/**
 * # Safety
 * `json` is a NUL-terminated string; `out` is writable.
 */
enum ComblabStatus comblab_document_parse(const char *json, struct ComblabDocument **out);

/**
 * Kind tag: "comb", "conditional", "tester", "tester-list" or "protocol".
 * Static storage; do not free. Null if `d` is null.
 *
 * # Safety
 * `d` is a live handle or null.
 */
const char *comblab_document_kind(const struct ComblabDocument *d);

/**
 * # Safety
 * `d` is a live handle; `out` is writable.
 */
enum ComblabStatus comblab_document_to_json(const struct ComblabDocument *d, char **out);

/**
 * Demo protocol by name (plaintext, fixed-state, epr, theta:<x>, coin2round).
 *
 * # Safety
 * `name` is a NUL-terminated string; `out` is writable.
 */
enum ComblabStatus comblab_demo(const char *name, struct ComblabDocument **out);

/**
 * Normalization check. Returns `Ok` or `Rejected`; `report` (may be null)
 * receives the JSON report.
 *
 * # Safety
 * `d` is a live handle; `report` is writable or null.
 */
enum ComblabStatus comblab_validate(const struct ComblabDocument *d, double tol, char **report);

/**
 * Distance between two combs over all testers on their wires, or over the
 * testers in `testers` when it is a tester or tester-list handle.
 *
 * # Safety
 * `a`, `b` are live comb handles; `testers` is a live handle or null;
 * `value` is writable.
 */
enum ComblabStatus comblab_distance(const struct ComblabDocument *a,
                                    const struct ComblabDocument *b,
                                    const struct ComblabDocument *testers,
                                    enum ComblabMode mode,
                                    uint64_t seed,
                                    double *value);

/**
 * Concealment, cheat construction and independent verification for a
 * protocol. `report` receives `{"concealment", "cheat", "verdict"}` as JSON.
 * Returns `Rejected` when verification fails.
 *
 * # Safety
 * `p` is a live protocol handle; `report` is writable.
 */
enum ComblabStatus comblab_conceal(const struct ComblabDocument *p, uint64_t seed, char **report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COMBLAB_H */
