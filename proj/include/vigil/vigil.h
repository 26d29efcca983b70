/*
 * vigil: failure detection for learned-policy rollouts.
 *
 * C API over the core library: opaque handles, status-code returns, and a
 * thread-local error message. Strings returned through char** are heap
 * allocated and must be released with vigil_string_free(); const char*
 * results stay owned by the handle they came from.
 */

#ifndef VIGIL_H
#define VIGIL_H

#include <stddef.h>
#include <stdint.h>

#if defined(VIGIL_BUILD)
#define VIGIL_API __attribute__((visibility("default")))
#else
#define VIGIL_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vigil_status {
  VIGIL_OK = 0,
  VIGIL_ERR_INVALID_ARGUMENT = 1,
  VIGIL_ERR_IO = 2,
  VIGIL_ERR_FORMAT = 3,
  VIGIL_ERR_DIMENSION = 4,
  VIGIL_ERR_UNKNOWN_METHOD = 5,
  VIGIL_ERR_SINGLE_CLASS = 6,
  VIGIL_ERR_NUMERIC = 7,
  VIGIL_ERR_INTERNAL = 8
} vigil_status;

typedef enum vigil_split_role {
  VIGIL_SPLIT_TRAIN = 0,
  VIGIL_SPLIT_EVAL_SEEN = 1,
  VIGIL_SPLIT_EVAL_UNSEEN = 2
} vigil_split_role;

typedef struct vigil_dataset vigil_dataset;
typedef struct vigil_split vigil_split;
typedef struct vigil_scorer vigil_scorer;
typedef struct vigil_scores vigil_scores;
typedef struct vigil_band vigil_band;

VIGIL_API const char* vigil_version(void);
VIGIL_API const char* vigil_status_name(vigil_status status);
/* message from the most recent failing call on this thread */
VIGIL_API const char* vigil_last_error(void);
VIGIL_API void vigil_string_free(char* s);

/* ---- datasets (directories of per-rollout .jsonl files) ---- */

VIGIL_API vigil_status vigil_dataset_load(const char* dir, vigil_dataset** out);
VIGIL_API vigil_status vigil_dataset_save(const vigil_dataset* ds,
                                          const char* dir);
/* synthetic generator; meta_json (optional) receives generator ground truth */
VIGIL_API vigil_status vigil_dataset_generate(const char* synth_config_json,
                                              vigil_dataset** out,
                                              char** meta_json);
VIGIL_API vigil_status vigil_dataset_truncate_min_length(
    const vigil_dataset* ds, vigil_dataset** out);
VIGIL_API vigil_status vigil_dataset_select(const vigil_dataset* ds,
                                            const char* const* rollout_ids,
                                            size_t n, vigil_dataset** out);
VIGIL_API size_t vigil_dataset_size(const vigil_dataset* ds);
VIGIL_API size_t vigil_dataset_task_count(const vigil_dataset* ds);
VIGIL_API const char* vigil_dataset_rollout_id(const vigil_dataset* ds,
                                               size_t index);
VIGIL_API const char* vigil_dataset_task_id(const vigil_dataset* ds,
                                            size_t index);
VIGIL_API int vigil_dataset_label(const vigil_dataset* ds, size_t index);
VIGIL_API size_t vigil_dataset_rollout_length(const vigil_dataset* ds,
                                              size_t index);
VIGIL_API void vigil_dataset_free(vigil_dataset* ds);

/* ---- seen/unseen task splits ---- */

VIGIL_API vigil_status vigil_split_create(const vigil_dataset* ds,
                                          size_t n_unseen_tasks,
                                          double train_frac, uint64_t seed,
                                          vigil_split** out);
VIGIL_API size_t vigil_split_count(const vigil_split* split,
                                   vigil_split_role role);
VIGIL_API const char* vigil_split_id(const vigil_split* split,
                                     vigil_split_role role, size_t index);
VIGIL_API void vigil_split_free(vigil_split* split);

/* ---- scorers (failure-score methods, learned or not) ----
 *
 * method_spec_json example:
 *   {"method": "mlp_score_trace", "agg": {"token": "mean"},
 *    "train": {"learning_rate": 1e-3, "epochs": 200, "seed": 7}}
 * Stateless methods (token stats, action-consistency scores) accept a null
 * training dataset.
 */

VIGIL_API vigil_status vigil_scorer_fit(const char* method_spec_json,
                                        const vigil_dataset* train,
                                        vigil_scorer** out);
VIGIL_API vigil_status vigil_scorer_save(const vigil_scorer* scorer,
                                         const char* path);
VIGIL_API vigil_status vigil_scorer_load(const char* path, vigil_scorer** out);
VIGIL_API const char* vigil_scorer_spec_json(const vigil_scorer* scorer);
VIGIL_API vigil_status vigil_scorer_score(const vigil_scorer* scorer,
                                          const vigil_dataset* ds,
                                          vigil_scores** out);
VIGIL_API void vigil_scorer_free(vigil_scorer* scorer);

/* ---- score traces ---- */

VIGIL_API size_t vigil_scores_count(const vigil_scores* scores);
VIGIL_API const char* vigil_scores_rollout_id(const vigil_scores* scores,
                                              size_t index);
VIGIL_API size_t vigil_scores_length(const vigil_scores* scores, size_t index);
VIGIL_API const double* vigil_scores_values(const vigil_scores* scores,
                                            size_t index);
VIGIL_API vigil_status vigil_scores_save_csv(const vigil_scores* scores,
                                             const vigil_dataset* ds,
                                             const char* path);
VIGIL_API void vigil_scores_free(vigil_scores* scores);

/* ---- conformal prediction bands ---- */

/* calibration must hold successful-rollout traces only; horizon 0 = longest
 * calibration trace */
VIGIL_API vigil_status vigil_band_fit(const vigil_scores* calibration,
                                      double alpha, size_t horizon,
                                      vigil_band** out);
VIGIL_API vigil_status vigil_band_save(const vigil_band* band,
                                       const char* path);
VIGIL_API vigil_status vigil_band_load(const char* path, vigil_band** out);
VIGIL_API double vigil_band_alpha(const vigil_band* band);
VIGIL_API double vigil_band_quantile(const vigil_band* band);
VIGIL_API size_t vigil_band_horizon(const vigil_band* band);
VIGIL_API double vigil_band_upper(const vigil_band* band, size_t step);
/* first_exceed_step is -1 when the trace never crosses the band */
VIGIL_API vigil_status vigil_band_detect(const vigil_band* band,
                                         const double* values, size_t n,
                                         int* detected,
                                         int64_t* first_exceed_step,
                                         double* relative_time);
VIGIL_API void vigil_band_free(vigil_band* band);

/* ---- metrics ---- */

VIGIL_API vigil_status vigil_roc_auc(const double* scores,
                                     const int32_t* labels, size_t n,
                                     double* out);
VIGIL_API vigil_status vigil_max_so_far(const double* values, size_t n,
                                        double* out);
VIGIL_API vigil_status vigil_accumulate(const double* values, size_t n,
                                        double* out);

/* ---- pipeline runners (write CSV reports) ---- */

/* ROC-AUC per eval split, plus band-based confusion metrics when with_alpha
 * is nonzero. model_path may be null/empty to fit from the train split.
 * summary_json (optional) receives the report rows as a JSON array. */
VIGIL_API vigil_status vigil_run_eval(const vigil_dataset* ds,
                                      const char* method_spec_json,
                                      const char* model_path,
                                      size_t n_unseen_tasks, double train_frac,
                                      uint64_t split_seed, int with_alpha,
                                      double alpha, const char* out_csv_path,
                                      char** summary_json);
VIGIL_API vigil_status vigil_run_sweep(const vigil_dataset* ds,
                                       const char* method_spec_json,
                                       const char* model_path,
                                       size_t n_unseen_tasks, double train_frac,
                                       uint64_t split_seed, const double* alphas,
                                       size_t n_alphas,
                                       const char* out_csv_path);
VIGIL_API vigil_status vigil_run_grid(const vigil_dataset* ds,
                                      const char* method, const char* grid_json,
                                      size_t n_unseen_tasks, double train_frac,
                                      uint64_t split_seed,
                                      const char* out_csv_path,
                                      char** best_spec_json);
VIGIL_API vigil_status vigil_run_calibrate(const vigil_dataset* ds,
                                           const vigil_scorer* scorer,
                                           size_t n_unseen_tasks,
                                           double train_frac,
                                           uint64_t split_seed, double alpha,
                                           const char* out_band_path);
/* agg_json: aggregation object like {"token":"mean"}; null = per-layout mean */
VIGIL_API vigil_status vigil_export_embeddings(const vigil_dataset* ds,
                                               const char* agg_json,
                                               const char* out_csv_path);

#ifdef __cplusplus
}
#endif

#endif /* VIGIL_H */
