#ifndef GRIDTREE_H
#define GRIDTREE_H

/* generated by cbindgen from gridtree-ffi; do not edit by hand */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status of one call.
 */
typedef enum GtStatus {
  /**
   * The call succeeded.
   */
  GtOk = 0,
  /**
   * A required pointer argument was null.
   */
  GtNullArgument = 1,
  /**
   * Input data or configuration was rejected.
   */
  GtConfig = 2,
  /**
   * A protocol failed while running.
   */
  GtProtocol = 3,
  /**
   * A string was not valid UTF-8.
   */
  GtUtf8 = 4,
} GtStatus;

/**
 * A grid partition of a relation.
 */
typedef struct GtPartition GtPartition;

/**
 * A loaded relation.
 */
typedef struct GtRelation GtRelation;

/**
 * The artifacts of one induction run.
 */
typedef struct GtRun GtRun;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Last error message of the current thread; valid until the next failing
 * call. The pointer must not be freed.
 */
const char *gt_last_error(void);

/**
 * Release a string returned by this library.
 *
 * # Safety
 * `s` must be a pointer previously returned by this library, or null.
 */
void gt_string_free(char *s);

/**
 * Load a relation from a CSV file with a header row.
 *
 * # Safety
 * All pointer arguments must be valid; `out` must point to writable memory.
 */
enum GtStatus gt_relation_load(const char *path,
                               const char *id_col,
                               const char *class_col,
                               struct GtRelation **out);

/**
 * Load a relation from in-memory CSV text.
 *
 * # Safety
 * All pointer arguments must be valid; `out` must point to writable memory.
 */
enum GtStatus gt_relation_from_csv(const char *csv_text,
                                   const char *id_col,
                                   const char *class_col,
                                   struct GtRelation **out);

/**
 * # Safety
 * `rel` must be a handle from this library, or null.
 */
void gt_relation_free(struct GtRelation *rel);

/**
 * Number of tuples in the relation.
 *
 * # Safety
 * `rel` must be a live handle; `out` must be writable.
 */
enum GtStatus gt_relation_tuple_count(const struct GtRelation *rel, uintptr_t *out);

/**
 * Build a seeded balanced grid partition with `v` vertical and `h`
 * horizontal groups.
 *
 * # Safety
 * `rel` must be a live handle; `out` must be writable.
 */
enum GtStatus gt_partition_make(const struct GtRelation *rel,
                                uint32_t v,
                                uint32_t h,
                                uint64_t seed,
                                struct GtPartition **out);

/**
 * # Safety
 * `partition` must be a handle from this library, or null.
 */
void gt_partition_free(struct GtPartition *partition);

/**
 * Partition spec as JSON `{v, h, attr_groups, tuple_groups, seed}`.
 *
 * # Safety
 * `partition` must be a live handle; `out` must be writable.
 */
enum GtStatus gt_partition_to_json(const struct GtPartition *partition, char **out);

/**
 * Run an induction protocol (`"horizontal"`, `"grid-hmerge"` or
 * `"grid-vmerge"`) over the partitioned relation. `test_mode != 0` enables
 * plaintext rendering of the result, for validation harnesses only.
 *
 * # Safety
 * `rel` and `partition` must be live handles; `out` must be writable.
 */
enum GtStatus gt_run_protocol(const struct GtRelation *rel,
                              const struct GtPartition *partition,
                              const char *strategy,
                              uint64_t seed,
                              uint32_t key_bits,
                              uint32_t taylor_terms,
                              uint32_t fixed_point_bits,
                              int32_t test_mode,
                              struct GtRun **out);

/**
 * # Safety
 * `run` must be a handle from this library, or null.
 */
void gt_run_free(struct GtRun *run);

/**
 * Public tree skeleton as JSON: node ids, owner groups and child links.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum GtStatus gt_run_tree_json(const struct GtRun *run, char **out);

/**
 * One party's private payloads as JSON; `party` is `"P<i>.<j>"`.
 *
 * # Safety
 * `run` must be a live handle; `party` a valid string; `out` writable.
 */
enum GtStatus gt_run_party_payload_json(const struct GtRun *run, const char *party, char **out);

/**
 * The full message transcript, one JSON object per line.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum GtStatus gt_run_transcript_jsonl(const struct GtRun *run, char **out);

/**
 * Aggregate cost counters as JSON.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum GtStatus gt_run_counters_json(const struct GtRun *run, char **out);

/**
 * Plaintext rendering of the tree; only available when the run was started
 * in test mode.
 *
 * # Safety
 * `run` must be a live handle; `out` must be writable.
 */
enum GtStatus gt_run_rendered_tree_json(const struct GtRun *run, char **out);

/**
 * Classify a tuple (JSON object of attribute -> value) by walking the
 * distributed tree's payloads; writes the class label.
 *
 * # Safety
 * `run` must be a live handle; `tuple_json` a valid string; `out` writable.
 */
enum GtStatus gt_run_classify(const struct GtRun *run, const char *tuple_json, char **out);

/**
 * Plaintext (non-private) ID3 on a relation, as JSON; the oracle the
 * protocols are validated against.
 *
 * # Safety
 * `rel` must be a live handle; `out` must be writable.
 */
enum GtStatus gt_plain_id3_json(const struct GtRelation *rel, char **out);

/**
 * ABI version of this library.
 */
uint32_t gt_abi_version(void);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* GRIDTREE_H */
