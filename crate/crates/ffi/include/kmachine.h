#ifndef KMACHINE_H
#define KMACHINE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum KmStatus {
  KM_STATUS_OK = 0,
  /**
   * A required pointer was null.
   */
  KM_STATUS_NULL_ARGUMENT = 1,
  /**
   * Bad parameters or malformed data.
   */
  KM_STATUS_INVALID_INPUT = 2,
  /**
   * A protocol broke the rules of the model; indicates a bug.
   */
  KM_STATUS_PROTOCOL_VIOLATION = 3,
  /**
   * File could not be read.
   */
  KM_STATUS_IO = 4,
  /**
   * A panic was caught at the boundary.
   */
  KM_STATUS_PANIC = 5,
} KmStatus;

typedef enum KmMetric {
  KM_METRIC_L1 = 0,
  KM_METRIC_L2_SQUARED = 1,
  KM_METRIC_L_INF = 2,
} KmMetric;

typedef enum KmAlgorithm {
  KM_ALGORITHM_KNN = 0,
  KM_ALGORITHM_BASELINE = 1,
  KM_ALGORITHM_SELECTION = 2,
} KmAlgorithm;

/**
 * Opaque dataset handle.
 */
typedef struct KmDataset KmDataset;

/**
 * Opaque query result handle.
 */
typedef struct KmResult KmResult;

typedef struct KmQueryParams {
  /**
   * Machine count, at least 2.
   */
  uint32_t k;
  /**
   * Neighbors wanted.
   */
  uint64_t l;
  uint64_t seed;
  enum KmMetric metric;
  enum KmAlgorithm algorithm;
  /**
   * Nonzero compares the answer with a brute-force sort.
   */
  uint8_t verify;
} KmQueryParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *km_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *km_version(void);

/**
 * Loads a dataset from a CSV file with header `id,label,c0,...`.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
enum KmStatus km_dataset_load_csv(const char *path, struct KmDataset **out);

/**
 * Builds an unlabelled dataset from `n * d` row-major coordinates. Point `i`
 * gets id `i`.
 *
 * # Safety
 * `coords` must point to `n * d` readable values (it may be null when `n` is 0)
 * and `out` must be a valid pointer.
 */
enum KmStatus km_dataset_from_coords(const int64_t *coords,
                                     size_t n,
                                     size_t d,
                                     struct KmDataset **out);

/**
 * Number of points, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a handle returned by this library and not yet freed.
 */
size_t km_dataset_len(const struct KmDataset *ds);

/**
 * Dimension, or 0 for a null handle.
 *
 * # Safety
 * As [`km_dataset_len`].
 */
size_t km_dataset_dim(const struct KmDataset *ds);

/**
 * # Safety
 * `ds` must be null or a handle returned by this library, freed at most once.
 */
void km_dataset_free(struct KmDataset *ds);

/**
 * Defaults: 16 machines, 1 neighbor, seed 0, squared L2, the sampling algorithm, no verification.
 */
struct KmQueryParams km_query_params_default(void);

/**
 * Finds the `params->l` nearest points to the `d`-dimensional `query`.
 *
 * # Safety
 * `ds` must be a live dataset handle, `query` must point to `d` readable
 * values (null allowed when `d` is 0), `params` and `out` must be valid.
 */
enum KmStatus km_query(const struct KmDataset *ds,
                       const int64_t *query,
                       size_t d,
                       const struct KmQueryParams *params,
                       struct KmResult **out);

/**
 * Number of neighbor ids in the result.
 *
 * # Safety
 * `r` must be null or a live result handle.
 */
size_t km_result_len(const struct KmResult *r);

/**
 * Copies up to `cap` neighbor ids, nearest first, into `buf`. Returns the number copied.
 *
 * # Safety
 * `r` must be null or a live result handle; `buf` must have room for `cap` ids.
 */
size_t km_result_ids(const struct KmResult *r, uint64_t *buf, size_t cap);

/**
 * # Safety
 * `r` must be null or a live result handle.
 */
uint64_t km_result_rounds(const struct KmResult *r);

/**
 * # Safety
 * `r` must be null or a live result handle.
 */
uint64_t km_result_messages(const struct KmResult *r);

/**
 * 1 when the pruned candidate set was too small and the run fell back to the
 * unpruned sets, else 0.
 *
 * # Safety
 * `r` must be null or a live result handle.
 */
uint8_t km_result_fallback(const struct KmResult *r);

/**
 * 1 if verified correct, 0 if verified wrong, -1 if not verified.
 *
 * # Safety
 * `r` must be null or a live result handle.
 */
int32_t km_result_correct(const struct KmResult *r);

/**
 * # Safety
 * `r` must be null or a live result handle, freed at most once.
 */
void km_result_free(struct KmResult *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* KMACHINE_H */
