#ifndef CDRM_H
#define CDRM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum CdrmStatus {
  CDRM_STATUS_OK = 0,
  CDRM_STATUS_NULL_POINTER = 1,
  CDRM_STATUS_INVALID_INPUT = 2,
  CDRM_STATUS_DIMENSION_MISMATCH = 3,
  CDRM_STATUS_INVALID_CONFIG = 4,
  CDRM_STATUS_TRAINING_DIVERGED = 5,
  CDRM_STATUS_SAMPLING_FAILED = 6,
  CDRM_STATUS_UNPREPARED_MODEL = 7,
  CDRM_STATUS_DEGENERATE_DATASET = 8,
  CDRM_STATUS_OUT_OF_BOUNDS = 9,
  CDRM_STATUS_IO = 10,
  CDRM_STATUS_PARSE = 11,
  CDRM_STATUS_UNSUPPORTED_VERSION = 12,
  CDRM_STATUS_SELF_CHECK = 13,
  CDRM_STATUS_BUFFER_TOO_SMALL = 14,
  CDRM_STATUS_INTERNAL = 99,
} CdrmStatus;

/**
 * Transition dataset.
 */
typedef struct CdrmDataset CdrmDataset;

/**
 * Trained model with its KDE statistics.
 */
typedef struct CdrmModel CdrmModel;

/**
 * Training knobs. `batches_per_epoch = 0` means one pass over the data and a
 * negative `final_learning_rate` keeps the rate constant.
 */
typedef struct CdrmTrainConfig {
  size_t epochs;
  size_t positive_batch;
  size_t negative_batch;
  size_t batches_per_epoch;
  size_t langevin_steps;
  double langevin_step_size;
  double langevin_noise_scale;
  double learning_rate;
  double final_learning_rate;
  double stability_eps;
  uint64_t seed;
} CdrmTrainConfig;

/**
 * Inference knobs.
 */
typedef struct CdrmInferenceConfig {
  size_t n_samples;
  size_t steps;
  double step_size;
  double noise_scale;
  double alpha;
  double dedup_fraction;
} CdrmInferenceConfig;

typedef struct CdrmToyConfig {
  size_t n_per_region;
  double sigma_eta;
  bool multimodal;
  uint64_t seed;
} CdrmToyConfig;

/**
 * Inference outcome. The prediction itself goes to a caller buffer.
 */
typedef struct CdrmInferenceResult {
  bool has_prediction;
  double eu;
  bool has_au;
  double au;
  size_t valid_count;
} CdrmInferenceResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *cdrm_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cdrm_version(void);

struct CdrmTrainConfig cdrm_train_config_default(void);

struct CdrmInferenceConfig cdrm_inference_config_default(void);

struct CdrmToyConfig cdrm_toy_config_default(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum CdrmStatus cdrm_dataset_load_csv(const char *path, struct CdrmDataset **out);

/**
 * # Safety
 * `cfg` must point to a valid config and `out` be writable.
 */
enum CdrmStatus cdrm_dataset_gen_toy(const struct CdrmToyConfig *cfg, struct CdrmDataset **out);

/**
 * Number of tuples, or 0 for NULL.
 *
 * # Safety
 * `ds` must be NULL or a live dataset handle.
 */
size_t cdrm_dataset_len(const struct CdrmDataset *ds);

/**
 * # Safety
 * `ds` must be NULL or a handle not yet freed.
 */
void cdrm_dataset_free(struct CdrmDataset *ds);

/**
 * Trains a model with hidden widths `hidden[0..n_hidden]` and fits its KDE
 * statistics with the median bandwidth rule.
 *
 * # Safety
 * `ds` and `cfg` must be valid, `hidden` must hold `n_hidden` entries, and
 * `out` be writable.
 */
enum CdrmStatus cdrm_model_train(const struct CdrmDataset *ds,
                                 const struct CdrmTrainConfig *cfg,
                                 const size_t *hidden,
                                 size_t n_hidden,
                                 struct CdrmModel **out);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum CdrmStatus cdrm_model_load(const char *path, struct CdrmModel **out);

/**
 * Saves with an empty provenance record (`seed` and `epochs` as given).
 *
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum CdrmStatus cdrm_model_save(const struct CdrmModel *model,
                                const char *path,
                                uint64_t seed,
                                size_t epochs);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void cdrm_model_free(struct CdrmModel *model);

/**
 * # Safety
 * `model` must be live; each out pointer must be NULL or writable.
 */
enum CdrmStatus cdrm_model_dims(const struct CdrmModel *model,
                                size_t *d_s,
                                size_t *d_a,
                                size_t *d_out);

/**
 * Score of one joint tuple `(s, a, s')` of length `len`.
 *
 * # Safety
 * `joint` must hold `len` doubles and `out` be writable.
 */
enum CdrmStatus cdrm_model_score(const struct CdrmModel *model,
                                 const double *joint,
                                 size_t len,
                                 double *out);

/**
 * Runs inference for `(s, a)` given as `input[0..len]`. When a prediction
 * exists it is written to `prediction[0..d_out]`; `prediction_len` must be at
 * least `d_out`.
 *
 * # Safety
 * Pointers must be valid for the stated lengths; `cfg` may be NULL for
 * defaults.
 */
enum CdrmStatus cdrm_model_infer(const struct CdrmModel *model,
                                 const double *input,
                                 size_t len,
                                 const struct CdrmInferenceConfig *cfg,
                                 uint64_t seed,
                                 struct CdrmInferenceResult *result,
                                 double *prediction,
                                 size_t prediction_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CDRM_H */
