#ifndef QAPROBE_H
#define QAPROBE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum QpMetric {
  QP_METRIC_EUCLIDEAN = 0,
  QP_METRIC_COSINE = 1,
} QpMetric;

typedef enum QpStatus {
  QP_STATUS_OK = 0,
  QP_STATUS_NULL_POINTER = 1,
  QP_STATUS_INVALID_ARGUMENT = 2,
  QP_STATUS_IO = 3,
  QP_STATUS_DATA = 4,
  QP_STATUS_ADAPTER = 5,
  QP_STATUS_CAPABILITY = 6,
  QP_STATUS_ANALYSIS = 7,
  /**
   * Output buffer too small; the required length is still written.
   */
  QP_STATUS_BUFFER_TOO_SMALL = 8,
  QP_STATUS_PANIC = 9,
} QpStatus;

/**
 * A loaded or generated dataset.
 */
typedef struct QpDataset QpDataset;

/**
 * A trained toy model.
 */
typedef struct QpModel QpModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static string. Never free it.
 */
const char *qp_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next call into the library on the same thread.
 */
const char *qp_last_error(void);

/**
 * Frees a string returned by the library. Null is ignored.
 *
 * # Safety
 * `s` must be null or a string returned by this library and not yet freed.
 */
void qp_string_free(char *s);

/**
 * Loads a dataset directory. A plant descriptor next to it is picked up.
 *
 * # Safety
 * `dir` must be a nul-terminated string and `out` writable.
 */
enum QpStatus qp_dataset_load(const char *dir, struct QpDataset **out);

/**
 * Generates a synthetic dataset from a TOML synth config (the keys of the
 * `[synth]` table, at top level). Null or empty text uses the defaults.
 *
 * # Safety
 * `config_toml` must be null or nul-terminated; `out` must be writable.
 */
enum QpStatus qp_dataset_generate(const char *config_toml, struct QpDataset **out);

/**
 * Writes the dataset, and its plant if any, into `dir`.
 *
 * # Safety
 * `dataset` must be a live handle and `dir` nul-terminated.
 */
enum QpStatus qp_dataset_write(const struct QpDataset *dataset, const char *dir);

/**
 * Number of train and test instances.
 *
 * # Safety
 * `dataset` must be a live handle; the outputs must be writable.
 */
enum QpStatus qp_dataset_counts(const struct QpDataset *dataset, size_t *n_train, size_t *n_test);

/**
 * # Safety
 * `dataset` must be null or a handle not yet freed.
 */
void qp_dataset_free(struct QpDataset *dataset);

/**
 * Trains the toy model on the dataset's train split.
 *
 * # Safety
 * `dataset` must be a live handle and `out` writable.
 */
enum QpStatus qp_model_train(const struct QpDataset *dataset,
                             uint64_t seed,
                             size_t epochs,
                             double learning_rate,
                             struct QpModel **out);

/**
 * # Safety
 * `path` must be nul-terminated and `out` writable.
 */
enum QpStatus qp_model_load(const char *path, struct QpModel **out);

/**
 * # Safety
 * `model` must be a live handle and `path` nul-terminated.
 */
enum QpStatus qp_model_save(const struct QpModel *model, const char *path);

/**
 * Joint-embedding width of the model.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum QpStatus qp_model_embedding_dim(const struct QpModel *model, size_t *out);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void qp_model_free(struct QpModel *model);

/**
 * Answers one probe of a dataset instance. `probe_id` uses the probe
 * encoding (`full`, `prefix:50`, `drop:WH`, `img:mean`, ...). The answer is
 * returned as a new string. When `embedding` is non-null, up to
 * `embedding_cap` components are written and `embedding_len` receives the
 * full width; a short buffer yields `BufferTooSmall`.
 *
 * # Safety
 * Handles must be live, strings nul-terminated, `answer` writable, and
 * `embedding` null or valid for `embedding_cap` writes.
 */
enum QpStatus qp_model_predict(const struct QpModel *model,
                               const struct QpDataset *dataset,
                               const char *instance_id,
                               const char *probe_id,
                               char **answer,
                               double *embedding,
                               size_t embedding_cap,
                               size_t *embedding_len);

/**
 * Runs one analysis and returns its report as JSON. `analysis` is one of
 * `novelty`, `answer-novelty`, `failure`, `question`, `pos`, `image`,
 * `ablation`. With a null `model`, the adapter named in the config is used
 * (`toy` by default). `config_toml` holds run-config keys and may be null.
 *
 * # Safety
 * `dataset` must be live, `model` null or live, strings null or
 * nul-terminated where allowed, and `json_out` writable.
 */
enum QpStatus qp_analyze(const struct QpDataset *dataset,
                         const struct QpModel *model,
                         const char *analysis,
                         const char *config_toml,
                         char **json_out);

/**
 * Distance between two `dim`-vectors. `metric` is a `QpMetric` value.
 *
 * # Safety
 * `u` and `v` must hold `dim` values; `out` must be writable.
 */
enum QpStatus qp_distance(const double *u,
                          const double *v,
                          size_t dim,
                          int32_t metric,
                          double *out);

/**
 * Exact k nearest rows of a row-major `n x dim` matrix. Writes
 * `min(k, n)` indices and distances, nearest first, and that count to
 * `found`. `metric` is a `QpMetric` value.
 *
 * # Safety
 * `train` must hold `n * dim` values, `query` `dim` values, and both
 * outputs room for `k` values.
 */
enum QpStatus qp_knn(const double *train,
                     size_t n,
                     size_t dim,
                     const double *query,
                     size_t k,
                     int32_t metric,
                     size_t *indices,
                     double *distances,
                     size_t *found);

/**
 * Pearson correlation of two length-`n` series. Zero variance is an
 * `Analysis` error.
 *
 * # Safety
 * `x` and `y` must hold `n` values; `out` must be writable.
 */
enum QpStatus qp_pearson(const double *x, const double *y, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QAPROBE_H */
