/* C interface to the smoothcal library.
 *
 * Every function returns a status code. On failure the message for the
 * calling thread is available from smoothcal_last_error() until the next
 * call on that thread. Strings returned through char** are owned by the
 * caller and released with smoothcal_free_string(). Handles are released
 * with their matching *_free function; passing NULL to a free is a no-op.
 */
#ifndef SMOOTHCAL_SMOOTHCAL_H
#define SMOOTHCAL_SMOOTHCAL_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#if defined(SMOOTHCAL_BUILDING_LIBRARY)
#define SMOOTHCAL_API __declspec(dllexport)
#else
#define SMOOTHCAL_API __declspec(dllimport)
#endif
#else
#define SMOOTHCAL_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum smoothcal_status {
  SMOOTHCAL_OK = 0,
  SMOOTHCAL_INVALID_ARGUMENT = 1,
  SMOOTHCAL_LOAD_ERROR = 2,
  SMOOTHCAL_SIZE_ERROR = 3,
  SMOOTHCAL_IO_ERROR = 4,
  SMOOTHCAL_INTERNAL_ERROR = 5
} smoothcal_status;

SMOOTHCAL_API const char* smoothcal_version(void);
SMOOTHCAL_API const char* smoothcal_last_error(void);
/* Line of the last load error (1-based), 0 when not applicable. */
SMOOTHCAL_API size_t smoothcal_last_error_line(void);
SMOOTHCAL_API void smoothcal_free_string(char* s);

/* ---- metrics on arrays ------------------------------------------------ */

SMOOTHCAL_API smoothcal_status smoothcal_smooth_ce(const double* probs, const int* labels,
                                                   size_t n, double* out);
SMOOTHCAL_API smoothcal_status smoothcal_dual_smooth_ce(const double* logits, const int* labels,
                                                        size_t n, double* out);
SMOOTHCAL_API smoothcal_status smoothcal_smooth_ce_grid_oracle(const double* probs,
                                                               const int* labels, size_t n,
                                                               double step, double* out);
SMOOTHCAL_API smoothcal_status smoothcal_binned_ece(const double* probs, const int* labels,
                                                    size_t n, size_t num_bins, double* out);
SMOOTHCAL_API smoothcal_status smoothcal_interval_ce(const double* probs, const int* labels,
                                                     size_t n, double* out);
SMOOTHCAL_API smoothcal_status smoothcal_mmce(const double* probs, const int* labels, size_t n,
                                              double bandwidth, double* out);
/* (1/n) sum |sigma(g_i) - y_i| */
SMOOTHCAL_API smoothcal_status smoothcal_l1_grad_norm(const double* logits, const int* labels,
                                                      size_t n, double* out);

typedef struct smoothcal_metric_report {
  double smooth_ce;
  int has_dual_smooth_ce; /* 1 for logit inputs */
  double dual_smooth_ce;
  double binned_ece;
  double interval_ce;
  double mmce;
  double mean_abs_residual;
  double log_loss;
  double accuracy;
} smoothcal_metric_report;

/* values are probabilities, or logits when logit_mode != 0. */
SMOOTHCAL_API smoothcal_status smoothcal_metric_report_compute(
    const double* values, const int* labels, size_t n, int logit_mode, size_t num_bins,
    double mmce_bandwidth, smoothcal_metric_report* out);
SMOOTHCAL_API smoothcal_status smoothcal_metric_report_json(const smoothcal_metric_report* r,
                                                            char** json_out);
SMOOTHCAL_API smoothcal_status smoothcal_metric_report_csv_row(const smoothcal_metric_report* r,
                                                               char** row_out);
/* Header matching smoothcal_metric_report_csv_row. Static storage. */
SMOOTHCAL_API const char* smoothcal_metric_report_columns(void);

/* Reads a value,label CSV (optional header) and computes the report with 10
 * bins and MMCE bandwidth 1. On a parse error the status is
 * SMOOTHCAL_LOAD_ERROR and smoothcal_last_error_line() names the line. */
SMOOTHCAL_API smoothcal_status smoothcal_metrics_from_csv(const char* path, int logit_mode,
                                                          smoothcal_metric_report* out);

/* ---- datasets --------------------------------------------------------- */

typedef struct smoothcal_dataset smoothcal_dataset;

SMOOTHCAL_API smoothcal_status smoothcal_dataset_gaussian_toy(size_t n, uint64_t seed,
                                                              smoothcal_dataset** out);
SMOOTHCAL_API smoothcal_status smoothcal_dataset_mirrored_toy(size_t n, double sigma, double tau,
                                                              uint64_t seed,
                                                              smoothcal_dataset** out);
SMOOTHCAL_API smoothcal_status smoothcal_dataset_threshold_separable(size_t n, uint64_t seed,
                                                                     smoothcal_dataset** out);
/* label_name selects the label column by header; when NULL, label_index is
 * used. Cells equal to positive_label map to 1, all others to 0. */
SMOOTHCAL_API smoothcal_status smoothcal_dataset_load_csv(const char* path,
                                                          const char* label_name,
                                                          size_t label_index,
                                                          const char* positive_label,
                                                          smoothcal_dataset** out);
/* Dense copy: features row-major n x dim. */
SMOOTHCAL_API smoothcal_status smoothcal_dataset_from_arrays(const double* features,
                                                             const int* labels, size_t n,
                                                             size_t dim,
                                                             smoothcal_dataset** out);
SMOOTHCAL_API smoothcal_status smoothcal_dataset_shape(const smoothcal_dataset* d, size_t* n,
                                                       size_t* dim);
/* Copies labels into a caller buffer of length n. */
SMOOTHCAL_API smoothcal_status smoothcal_dataset_labels(const smoothcal_dataset* d, int* labels);
SMOOTHCAL_API smoothcal_status smoothcal_dataset_split(const smoothcal_dataset* d, size_t n_train,
                                                       size_t n_test, uint64_t seed,
                                                       smoothcal_dataset** train,
                                                       smoothcal_dataset** test);
SMOOTHCAL_API void smoothcal_dataset_free(smoothcal_dataset* d);

/* ---- learners ----------------------------------------------------------- */

typedef struct smoothcal_model smoothcal_model;

/* config_json: {"learner": "gbt"|"kernel"|"nn", ...} with the same fields as
 * the learner sections of a sweep config plus "iterations". seed is used by
 * the network initialisation only. */
SMOOTHCAL_API smoothcal_status smoothcal_train(const smoothcal_dataset* train,
                                               const char* config_json, uint64_t seed,
                                               smoothcal_model** out);
/* Writes one logit per row of data. average != 0 selects the Cesaro-averaged
 * predictor (boosting learners only). */
SMOOTHCAL_API smoothcal_status smoothcal_model_predict(const smoothcal_model* m,
                                                       const smoothcal_dataset* data, int average,
                                                       double* logits_out);
SMOOTHCAL_API smoothcal_status smoothcal_model_to_json(const smoothcal_model* m, char** json_out);
SMOOTHCAL_API smoothcal_status smoothcal_model_trace_csv(const smoothcal_model* m, char** csv_out);
SMOOTHCAL_API void smoothcal_model_free(smoothcal_model* m);

/* ---- experiments -------------------------------------------------------- */

/* Runs the sweep described by the JSON file at config_path. Outputs go to
 * output_dir when non-NULL, else to the config's output_dir. threads = 0
 * uses SMOOTHCAL_THREADS or the hardware concurrency. trends_json_out, when
 * non-NULL, receives the trends document (also written to disk). */
SMOOTHCAL_API smoothcal_status smoothcal_sweep(const char* config_path, const char* output_dir,
                                               unsigned threads, char** trends_json_out);

/* *ok_out is 1 when every instance passed or was skipped. */
SMOOTHCAL_API smoothcal_status smoothcal_verify(const char* suite, uint64_t seed, size_t count,
                                                int* ok_out, char** report_json_out);

SMOOTHCAL_API smoothcal_status smoothcal_bounds_report(const char* inputs_json,
                                                       char** report_json_out);

#ifdef __cplusplus
}
#endif

#endif /* SMOOTHCAL_SMOOTHCAL_H */
