/* C interface of the visnet camera-network simulator. */

#ifndef VISNET_H
#define VISNET_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Outcome of a fallible call.
 */
typedef enum VisnetStatus {
  VisnetOk = 0,
  /**
   * A required pointer argument was NULL.
   */
  VisnetNullArgument = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  VisnetInvalidUtf8 = 2,
  /**
   * The configuration key does not exist.
   */
  VisnetInvalidKey = 3,
  /**
   * The value could not be parsed for its key.
   */
  VisnetInvalidValue = 4,
  /**
   * The assembled configuration failed cross-field validation.
   */
  VisnetInvalidConfig = 5,
  /**
   * The sweep could not run (for example the image file is
   * unreadable).
   */
  VisnetRunFailed = 6,
  /**
   * A row index was past the end of the result set.
   */
  VisnetOutOfRange = 7,
} VisnetStatus;

/**
 * Opaque run configuration; create with `visnet_config_new`.
 */
typedef struct VisnetConfig VisnetConfig;

/**
 * Opaque result set of one sweep; one row per simulated seed.
 */
typedef struct VisnetResults VisnetResults;

/**
 * One result row with the same columns as the CSV export.
 */
typedef struct VisnetRunRow {
  uint8_t scenario;
  uint64_t seed;
  uint64_t fragments_sent;
  uint64_t fragments_delivered;
  double avg_loss_ratio;
  uint32_t images_attempted;
  uint32_t images_received;
  uint32_t complete;
  uint32_t usable;
  uint32_t unusable;
  double mean_latency_s;
  double latency_ratio;
} VisnetRunRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * A new configuration holding the built-in defaults. Never NULL.
 * Release with `visnet_config_free`.
 */
struct VisnetConfig *visnet_config_new(void);

/**
 * Releases a configuration. NULL is ignored.
 */
void visnet_config_free(struct VisnetConfig *cfg);

/**
 * Sets one configuration value. Keys and value syntax are exactly the
 * config-file keys of the command-line tool ("scenario", "nodes",
 * "area", "range", "seed", "runs", "alpha", "beta", "path-factor",
 * "capture-rate", "images-per-burst", "sentry-fraction",
 * "facing-spread", "energy-floor", "image-file").
 */
enum VisnetStatus visnet_config_set(struct VisnetConfig *cfg, const char *key, const char *value);

/**
 * Runs the configured seed sweep. On success stores a result handle
 * in `out`; release it with `visnet_results_free`.
 */
enum VisnetStatus visnet_run(const struct VisnetConfig *cfg, struct VisnetResults **out);

/**
 * Releases a result set. NULL is ignored.
 */
void visnet_results_free(struct VisnetResults *results);

/**
 * Number of rows in the result set; 0 for NULL.
 */
uintptr_t visnet_results_len(const struct VisnetResults *results);

/**
 * Copies row `index` into `row`.
 */
enum VisnetStatus visnet_results_row(const struct VisnetResults *results,
                                     uintptr_t index,
                                     struct VisnetRunRow *row);

/**
 * Renders the result set as CSV, one row per run, and stores a
 * NUL-terminated copy in `out`. Release it with `visnet_string_free`.
 */
enum VisnetStatus visnet_results_to_csv(const struct VisnetResults *results, char **out);

/**
 * Releases a string produced by this library. NULL is ignored.
 */
void visnet_string_free(char *s);

/**
 * Static description of a status code; never NULL.
 */
const char *visnet_status_message(enum VisnetStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VISNET_H */
