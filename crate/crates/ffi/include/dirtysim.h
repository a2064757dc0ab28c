#ifndef DIRTYSIM_H
#define DIRTYSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DsAccessKind {
  DS_ACCESS_KIND_READ = 0,
  DS_ACCESS_KIND_WRITE = 1,
} DsAccessKind;

typedef enum DsOutcomeKind {
  DS_OUTCOME_KIND_HIT = 0,
  DS_OUTCOME_KIND_MISS_FILL_INVALID = 1,
  DS_OUTCOME_KIND_MISS_EVICT_CLEAN = 2,
  DS_OUTCOME_KIND_MISS_EVICT_DIRTY = 3,
  DS_OUTCOME_KIND_UNCACHED = 4,
} DsOutcomeKind;

typedef enum DsPolicy {
  DS_POLICY_LRU = 0,
  DS_POLICY_TREE_PLRU = 1,
  DS_POLICY_RANDOM = 2,
} DsPolicy;

/**
 * Result code of every fallible call.
 */
typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID_ARGUMENT = 2,
  DS_STATUS_CALIBRATION = 3,
  DS_STATUS_BUFFER_TOO_SMALL = 4,
  DS_STATUS_INTERNAL = 5,
} DsStatus;

/**
 * Opaque cache handle.
 */
typedef struct DsCache DsCache;

/**
 * Cache construction parameters. Start from [`ds_cache_params_default`].
 */
typedef struct DsCacheParams {
  uint32_t num_sets;
  uint32_t ways;
  uint32_t line_size;
  /**
   * Non-zero selects write-through, no-allocate stores.
   */
  uint8_t write_through;
  enum DsPolicy policy;
  /**
   * Seed of the victim generator when `policy` is random.
   */
  uint64_t policy_seed;
  uint64_t l1_hit;
  uint64_t clean_replace;
  uint64_t dirty_replace;
  uint64_t uncached_store;
  uint64_t jitter;
  uint64_t timer_overhead;
} DsCacheParams;

typedef struct DsAccessOutcome {
  enum DsOutcomeKind kind;
  /**
   * Way filled or replaced on a miss; -1 for hits and uncached stores.
   */
  int32_t victim_way;
  uint8_t writeback;
  uint64_t latency;
} DsAccessOutcome;

typedef struct DsLineState {
  uint8_t valid;
  uint8_t dirty;
  uint32_t actor;
  uint64_t tag;
} DsLineState;

typedef struct DsActorCounters {
  uint64_t loads;
  uint64_t stores;
  uint64_t l1_hits;
  uint64_t l1_misses;
  uint64_t writebacks;
} DsActorCounters;

typedef struct DsExperimentResult {
  uint64_t set_size;
  uint64_t dirty_count;
  uint64_t trials;
  uint64_t successes;
  double evicted_fraction;
} DsExperimentResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Default geometry and latencies: 64 sets, 8 ways, 64-byte lines, true LRU,
 * write-back; hit 4, clean replace 11, dirty replace 22 cycles.
 */
struct DsCacheParams ds_cache_params_default(void);

/**
 * Creates a cache. `seed` drives latency jitter.
 *
 * # Safety
 * `params` must point to a valid `DsCacheParams`; `out` must be writable.
 */
enum DsStatus ds_cache_new(const struct DsCacheParams *params, uint64_t seed, struct DsCache **out);

/**
 * Releases a cache. Null is ignored.
 *
 * # Safety
 * `cache` must come from `ds_cache_new` and not be used afterwards.
 */
void ds_cache_free(struct DsCache *cache);

/**
 * Performs one access on behalf of `actor`.
 *
 * # Safety
 * `cache` must be a live handle; `out` must be writable or null.
 */
enum DsStatus ds_cache_access(struct DsCache *cache,
                              uint32_t actor,
                              uint64_t address,
                              enum DsAccessKind kind,
                              struct DsAccessOutcome *out);

/**
 * Invalidates every line and clears counters.
 *
 * # Safety
 * `cache` must be a live handle.
 */
enum DsStatus ds_cache_reset(struct DsCache *cache);

/**
 * Number of dirty lines in `set`.
 *
 * # Safety
 * `cache` must be a live handle; `out` must be writable.
 */
enum DsStatus ds_cache_dirty_count(const struct DsCache *cache, size_t set, size_t *out);

/**
 * Copies the state of every way of `set` into `out[0..ways]`. `written`
 * receives the number of ways, also when the buffer is too small.
 *
 * # Safety
 * `cache` must be a live handle; `out` must hold `capacity` entries;
 * `written` must be writable.
 */
enum DsStatus ds_cache_snapshot_set(const struct DsCache *cache,
                                    size_t set,
                                    struct DsLineState *out,
                                    size_t capacity,
                                    size_t *written);

/**
 * Event counters of `actor`.
 *
 * # Safety
 * `cache` must be a live handle; `out` must be writable.
 */
enum DsStatus ds_cache_counters(const struct DsCache *cache,
                                uint32_t actor,
                                struct DsActorCounters *out);

/**
 * `1 - ((ways - d) / ways)^len`.
 */
double ds_analytic_dirty_eviction_probability(uint32_t ways, uint32_t d, uint32_t replacement_len);

/**
 * Eviction-distance Monte Carlo experiment on an 8-way set.
 *
 * # Safety
 * `out` must be writable.
 */
enum DsStatus ds_eviction_distance_experiment(enum DsPolicy policy,
                                              uint32_t n,
                                              uint32_t trials,
                                              uint64_t seed,
                                              struct DsExperimentResult *out);

/**
 * Dirty-eviction Monte Carlo experiment under random replacement.
 *
 * # Safety
 * `out` must be writable.
 */
enum DsStatus ds_dirty_eviction_experiment(uint32_t d,
                                           uint32_t replacement_len,
                                           uint32_t trials,
                                           uint64_t seed,
                                           struct DsExperimentResult *out);

/**
 * Levenshtein distance between two byte strings.
 *
 * # Safety
 * `a` and `b` must point to `a_len` and `b_len` readable bytes (they may be
 * null when the length is zero); `out` must be writable.
 */
enum DsStatus ds_edit_distance(const uint8_t *a,
                               size_t a_len,
                               const uint8_t *b,
                               size_t b_len,
                               size_t *out);

/**
 * Channel rate in Kbps, rounded to three decimals. Returns NaN when
 * `period` is zero.
 */
double ds_rate_kbps(uint64_t period, uint32_t bits_per_symbol, double freq_hz);

/**
 * Calibrates and runs one channel transmission.
 *
 * `config_json` is a JSON channel configuration; omitted fields take their
 * defaults. On success `*out_json` receives the JSON report, to be released
 * with `ds_string_free`.
 *
 * # Safety
 * `config_json` must be a NUL-terminated string; `out_json` must be writable.
 */
enum DsStatus ds_run_channel_json(const char *config_json,
                                  uint32_t calibration_trials,
                                  char **out_json);

/**
 * Releases a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not be used afterwards.
 */
void ds_string_free(char *s);

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *ds_last_error_message(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DIRTYSIM_H */
