#ifndef NIDS_H
#define NIDS_H

/* Generated by cbindgen from crates/ffi/src. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every call.
 */
typedef enum NidsStatus {
  NIDS_STATUS_OK = 0,
  NIDS_STATUS_NULL_POINTER = 1,
  NIDS_STATUS_INVALID_ARGUMENT = 2,
  NIDS_STATUS_DIMENSION = 3,
  NIDS_STATUS_CONTRACT = 4,
  NIDS_STATUS_NUMERIC = 5,
  NIDS_STATUS_CONFIG = 6,
  NIDS_STATUS_PARSE = 7,
  NIDS_STATUS_FORMAT = 8,
  NIDS_STATUS_IO = 9,
  NIDS_STATUS_TRAINING = 10,
  NIDS_STATUS_BUFFER_TOO_SMALL = 11,
  NIDS_STATUS_PANIC = 12,
  NIDS_STATUS_INTERNAL = 13,
} NidsStatus;

/**
 * Trained classifier.
 */
typedef struct NidsClassifier NidsClassifier;

/**
 * Trained conditional GAN.
 */
typedef struct NidsGan NidsGan;

/**
 * Dense matrix of encoded rows with integer class labels.
 */
typedef struct NidsMatrix NidsMatrix;

/**
 * Support-weighted scores, all in [0, 1].
 */
typedef struct NidsScores {
  double accuracy;
  double precision;
  double recall;
  double f1;
} NidsScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call on the same thread.
 */
const char *nids_last_error(void);

/**
 * Library version, static storage.
 */
const char *nids_version(void);

/**
 * Loads a matrix file written by the `nids` tool.
 */
enum NidsStatus nids_matrix_load(const char *path_utf8, struct NidsMatrix **matrix_out);

/**
 * Builds a matrix from row-major `values` (`rows * cols`) and `labels` (`rows`).
 * Every label must be below `num_classes`.
 */
enum NidsStatus nids_matrix_new(const double *values,
                                const uint32_t *labels,
                                size_t rows,
                                size_t cols,
                                size_t num_classes,
                                struct NidsMatrix **matrix_out);

enum NidsStatus nids_matrix_save(const struct NidsMatrix *matrix, const char *path_utf8);

enum NidsStatus nids_matrix_shape(const struct NidsMatrix *matrix,
                                  size_t *rows_out,
                                  size_t *cols_out,
                                  size_t *classes_out);

/**
 * Copies the row-major values into `buf` (at least `rows * cols`).
 */
enum NidsStatus nids_matrix_values(const struct NidsMatrix *matrix, double *buf, size_t buf_len);

/**
 * Copies the labels into `buf` (at least `rows`).
 */
enum NidsStatus nids_matrix_labels(const struct NidsMatrix *matrix, uint32_t *buf, size_t buf_len);

void nids_matrix_free(struct NidsMatrix *matrix);

/**
 * Rows to synthesize per class so every class reaches the largest count.
 * `counts` and `plan_out` both hold `num_classes` entries.
 */
enum NidsStatus nids_balance_plan(const size_t *counts, size_t num_classes, size_t *plan_out);

/**
 * Accuracy and support-weighted precision, recall and F1. Classes with no
 * predicted or true rows contribute 0 to the ratio they would divide by.
 */
enum NidsStatus nids_weighted_scores(const uint32_t *y_true,
                                     const uint32_t *y_pred,
                                     size_t n,
                                     size_t num_classes,
                                     struct NidsScores *scores_out);

enum NidsStatus nids_classifier_load(const char *path_utf8, struct NidsClassifier **model_out);

enum NidsStatus nids_classifier_dims(const struct NidsClassifier *model,
                                     size_t *input_dim_out,
                                     size_t *num_classes_out);

/**
 * Class probabilities for `rows` row-major inputs of width `cols`.
 * `probs_out` holds `rows * num_classes`; `labels_out` (`rows`) may be null.
 */
enum NidsStatus nids_classifier_predict(const struct NidsClassifier *model,
                                        const double *x,
                                        size_t rows,
                                        size_t cols,
                                        double *probs_out,
                                        size_t probs_len,
                                        uint32_t *labels_out);

/**
 * Kernel SHAP attributions of `P(class | x)` for one row, one value per
 * column. `space` (may be null) supplies column groups, so a one-hot block
 * gets one attribution on its first column and zeros elsewhere.
 * `n_samples == 0` asks for exact enumeration (at most 12 groups).
 */
enum NidsStatus nids_classifier_shap(const struct NidsClassifier *model,
                                     const struct NidsMatrix *space,
                                     const double *x,
                                     size_t cols,
                                     const double *background,
                                     size_t background_rows,
                                     size_t class_,
                                     size_t n_samples,
                                     uint64_t seed,
                                     double *phi_out,
                                     size_t phi_len,
                                     double *base_value_out);

void nids_classifier_free(struct NidsClassifier *model);

enum NidsStatus nids_gan_load(const char *path_utf8, struct NidsGan **model_out);

enum NidsStatus nids_gan_dims(const struct NidsGan *model,
                              size_t *feature_dim_out,
                              size_t *num_classes_out);

/**
 * `n` synthetic rows of `class` into `rows_out` (`n * feature_dim`).
 * The same seed always gives the same rows.
 */
enum NidsStatus nids_gan_generate(const struct NidsGan *model,
                                  size_t class_,
                                  size_t n,
                                  uint64_t seed,
                                  double *rows_out,
                                  size_t rows_len);

void nids_gan_free(struct NidsGan *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NIDS_H */
