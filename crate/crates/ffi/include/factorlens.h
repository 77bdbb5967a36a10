/* factorlens C API. All functions return FlStatus unless noted; call
 * fl_last_error_message() for details after a non-zero status. */

#ifndef FACTORLENS_H
#define FACTORLENS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

/*
 Result codes. Values are stable.
 */
typedef enum FlStatus {
  FL_STATUS_OK = 0,
  /*
   Grid index out of range.
   */
  FL_STATUS_INDEX = 1,
  /*
   Unknown factor name.
   */
  FL_STATUS_KEY = 2,
  FL_STATUS_PARAM = 3,
  FL_STATUS_SHAPE = 4,
  /*
   Zero variance or identical samples.
   */
  FL_STATUS_DEGENERATE = 5,
  /*
   Retrieval metadata missing or inconsistent.
   */
  FL_STATUS_META = 6,
  /*
   Malformed `.fset` content.
   */
  FL_STATUS_FORMAT = 7,
  FL_STATUS_CONVERGENCE = 8,
  FL_STATUS_IO = 9,
  FL_STATUS_NULL_POINTER = 10,
  /*
   A string argument was not valid UTF-8.
   */
  FL_STATUS_UTF8 = 11,
  FL_STATUS_PANIC = 12,
} FlStatus;

/*
 A feature set: rows of features on a factor grid.
 */
typedef struct FlFeatureSet FlFeatureSet;

/*
 A dot-product retrieval index.
 */
typedef struct FlIndex FlIndex;

/*
 A variance report from `fl_analyze`.
 */
typedef struct FlReport FlReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after a success.
 The pointer stays valid until the next `fl_*` call on the same thread.
 */
const char *fl_last_error_message(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *fl_version(void);

/*
 Loads a `.fset` file.
 */
enum FlStatus fl_feature_set_load(const char *path, struct FlFeatureSet **out);

/*
 Writes a `.fset` file.
 */
enum FlStatus fl_feature_set_save(const struct FlFeatureSet *set, const char *path);

/*
 Builds a feature set from row-major `data` (`prod(levels) * dim` values).
 Factors are named by `factor_names` and have `levels[k]` indexed levels;
 rows follow the grid with the last factor varying fastest.
 */
enum FlStatus fl_feature_set_from_data(uintptr_t n_factors,
                                       const char *const *factor_names,
                                       const uintptr_t *levels,
                                       uintptr_t dim,
                                       const float *data,
                                       uintptr_t data_len,
                                       const char *layer,
                                       struct FlFeatureSet **out);

/*
 Number of rows, or 0 for a null handle.
 */
uintptr_t fl_feature_set_rows(const struct FlFeatureSet *set);

/*
 Feature dimension, or 0 for a null handle.
 */
uintptr_t fl_feature_set_dim(const struct FlFeatureSet *set);

void fl_feature_set_free(struct FlFeatureSet *set);

/*
 Decomposes `set` and reports variances; `threshold` is the explained
 variance fraction used for intrinsic dimensions.
 */
enum FlStatus fl_analyze(const struct FlFeatureSet *set, double threshold, struct FlReport **out);

/*
 Number of factors, or 0 for a null handle.
 */
uintptr_t fl_report_n_factors(const struct FlReport *report);

/*
 Total variance, or NaN for a null handle.
 */
double fl_report_total_variance(const struct FlReport *report);

/*
 Copies relative variances (factors in order, then the residual) into
 `out`, which must hold `fl_report_n_factors(report) + 1` values.
 */
enum FlStatus fl_report_relative_variances(const struct FlReport *report,
                                           double *out,
                                           uintptr_t len);

/*
 Serializes the report as JSON. Free the string with `fl_string_free`.
 */
enum FlStatus fl_report_to_json(const struct FlReport *report, char **out);

void fl_report_free(struct FlReport *report);

/*
 Frees a string returned by this library.
 */
void fl_string_free(char *s);

/*
 Builds a retrieval index over `set`. `azimuths` may be null; otherwise it
 holds one azimuth in degrees per row. Rows are labelled by their index.
 */
enum FlStatus fl_index_build(const struct FlFeatureSet *set,
                             const double *azimuths,
                             uintptr_t target_dim,
                             bool normalize,
                             struct FlIndex **out);

/*
 Reduced dimension of the index, or 0 for a null handle.
 */
uintptr_t fl_index_reduced_dim(const struct FlIndex *index);

/*
 Top-`k` rows for `feature` (length `dim`). `rows` and `scores` must hold
 `k` entries; `count` receives the number written (`min(k, rows)`).
 */
enum FlStatus fl_index_query(const struct FlIndex *index,
                             const double *feature,
                             uintptr_t dim,
                             uintptr_t k,
                             uintptr_t *rows,
                             double *scores,
                             uintptr_t *count);

void fl_index_free(struct FlIndex *index);

/*
 Circular azimuth difference in degrees, in [0, 180].
 */
double fl_angular_error(double a, double b);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FACTORLENS_H */
