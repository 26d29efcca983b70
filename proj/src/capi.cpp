// C API implementation: opaque handles over the core types, exceptions
// mapped to status codes with a thread-local message.

#include "vigil/vigil.h"

#include <cstring>
#include <exception>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "vigil/error.hpp"
#include "vigil/io.hpp"
#include "vigil/methods.hpp"
#include "vigil/pipeline.hpp"
#include "vigil/synth.hpp"

struct vigil_dataset {
  vigil::Dataset ds;
};

struct vigil_split {
  vigil::SplitAssignment split;
};

struct vigil_scorer {
  std::unique_ptr<vigil::Scorer> scorer;
  std::string spec_json;
};

struct vigil_scores {
  std::vector<vigil::ScoreTrace> traces;
};

struct vigil_band {
  vigil::ConformalBand band;
};

namespace {

thread_local std::string g_last_error;

vigil_status to_status(vigil::ErrorCode code) {
  using vigil::ErrorCode;
  switch (code) {
    case ErrorCode::InvalidArgument: return VIGIL_ERR_INVALID_ARGUMENT;
    case ErrorCode::Io: return VIGIL_ERR_IO;
    case ErrorCode::Format: return VIGIL_ERR_FORMAT;
    case ErrorCode::Dimension: return VIGIL_ERR_DIMENSION;
    case ErrorCode::UnknownMethod: return VIGIL_ERR_UNKNOWN_METHOD;
    case ErrorCode::SingleClass: return VIGIL_ERR_SINGLE_CLASS;
    case ErrorCode::Numeric: return VIGIL_ERR_NUMERIC;
    case ErrorCode::Internal: return VIGIL_ERR_INTERNAL;
  }
  return VIGIL_ERR_INTERNAL;
}

template <typename Fn>
vigil_status guarded(Fn&& fn) {
  try {
    fn();
    return VIGIL_OK;
  } catch (const vigil::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return VIGIL_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return VIGIL_ERR_INTERNAL;
  }
}

vigil_status require_arg(bool ok, const char* msg) {
  if (ok) return VIGIL_OK;
  g_last_error = msg;
  return VIGIL_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

vigil::SplitOptions split_options(size_t n_unseen, double frac, uint64_t seed) {
  vigil::SplitOptions o;
  o.n_unseen_tasks = n_unseen;
  o.train_frac = frac;
  o.seed = seed;
  return o;
}

}  // namespace

extern "C" {

const char* vigil_version(void) { return "0.1.0"; }

const char* vigil_status_name(vigil_status status) {
  switch (status) {
    case VIGIL_OK: return "ok";
    case VIGIL_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case VIGIL_ERR_IO: return "io";
    case VIGIL_ERR_FORMAT: return "format";
    case VIGIL_ERR_DIMENSION: return "dimension";
    case VIGIL_ERR_UNKNOWN_METHOD: return "unknown_method";
    case VIGIL_ERR_SINGLE_CLASS: return "single_class";
    case VIGIL_ERR_NUMERIC: return "numeric";
    case VIGIL_ERR_INTERNAL: return "internal";
  }
  return "internal";
}

const char* vigil_last_error(void) { return g_last_error.c_str(); }

void vigil_string_free(char* s) { std::free(s); }

/* ---- datasets ---- */

vigil_status vigil_dataset_load(const char* dir, vigil_dataset** out) {
  if (vigil_status s = require_arg(dir && out, "null argument")) return s;
  return guarded([&] {
    auto handle = std::make_unique<vigil_dataset>();
    handle->ds = vigil::load_dataset(dir);
    *out = handle.release();
  });
}

vigil_status vigil_dataset_save(const vigil_dataset* ds, const char* dir) {
  if (vigil_status s = require_arg(ds && dir, "null argument")) return s;
  return guarded([&] { vigil::save_dataset(ds->ds, dir); });
}

vigil_status vigil_dataset_generate(const char* synth_config_json,
                                    vigil_dataset** out, char** meta_json) {
  if (vigil_status s = require_arg(synth_config_json && out, "null argument"))
    return s;
  return guarded([&] {
    vigil::SynthConfig cfg =
        vigil::synth_config_from_json_text(synth_config_json);
    vigil::SynthResult result = vigil::generate(cfg);
    auto handle = std::make_unique<vigil_dataset>();
    handle->ds = std::move(result.dataset);
    if (meta_json)
      *meta_json = dup_string(vigil::synth_meta_to_json_text(result.meta));
    *out = handle.release();
  });
}

vigil_status vigil_dataset_truncate_min_length(const vigil_dataset* ds,
                                               vigil_dataset** out) {
  if (vigil_status s = require_arg(ds && out, "null argument")) return s;
  return guarded([&] {
    auto handle = std::make_unique<vigil_dataset>();
    handle->ds = vigil::truncate_to_min_length(ds->ds);
    *out = handle.release();
  });
}

vigil_status vigil_dataset_select(const vigil_dataset* ds,
                                  const char* const* rollout_ids, size_t n,
                                  vigil_dataset** out) {
  if (vigil_status s = require_arg(ds && rollout_ids && out, "null argument"))
    return s;
  return guarded([&] {
    std::vector<std::string> ids(rollout_ids, rollout_ids + n);
    auto handle = std::make_unique<vigil_dataset>();
    handle->ds = vigil::subset(ds->ds, ids);
    *out = handle.release();
  });
}

size_t vigil_dataset_size(const vigil_dataset* ds) {
  return ds ? ds->ds.size() : 0;
}

size_t vigil_dataset_task_count(const vigil_dataset* ds) {
  return ds ? ds->ds.task_count() : 0;
}

const char* vigil_dataset_rollout_id(const vigil_dataset* ds, size_t index) {
  if (!ds || index >= ds->ds.size()) return nullptr;
  return ds->ds.rollouts()[index].rollout_id.c_str();
}

const char* vigil_dataset_task_id(const vigil_dataset* ds, size_t index) {
  if (!ds || index >= ds->ds.size()) return nullptr;
  return ds->ds.rollouts()[index].task_id.c_str();
}

int vigil_dataset_label(const vigil_dataset* ds, size_t index) {
  if (!ds || index >= ds->ds.size()) return -1;
  return ds->ds.rollouts()[index].label;
}

size_t vigil_dataset_rollout_length(const vigil_dataset* ds, size_t index) {
  if (!ds || index >= ds->ds.size()) return 0;
  return ds->ds.rollouts()[index].length();
}

void vigil_dataset_free(vigil_dataset* ds) { delete ds; }

/* ---- splits ---- */

vigil_status vigil_split_create(const vigil_dataset* ds, size_t n_unseen_tasks,
                                double train_frac, uint64_t seed,
                                vigil_split** out) {
  if (vigil_status s = require_arg(ds && out, "null argument")) return s;
  return guarded([&] {
    auto handle = std::make_unique<vigil_split>();
    handle->split =
        vigil::split_dataset(ds->ds, n_unseen_tasks, train_frac, seed);
    *out = handle.release();
  });
}

size_t vigil_split_count(const vigil_split* split, vigil_split_role role) {
  if (!split) return 0;
  return split->split.ids(static_cast<vigil::SplitRole>(role)).size();
}

const char* vigil_split_id(const vigil_split* split, vigil_split_role role,
                           size_t index) {
  if (!split) return nullptr;
  const auto& ids = split->split.ids(static_cast<vigil::SplitRole>(role));
  if (index >= ids.size()) return nullptr;
  return ids[index].c_str();
}

void vigil_split_free(vigil_split* split) { delete split; }

/* ---- scorers ---- */

vigil_status vigil_scorer_fit(const char* method_spec_json,
                              const vigil_dataset* train, vigil_scorer** out) {
  if (vigil_status s = require_arg(method_spec_json && out, "null argument"))
    return s;
  return guarded([&] {
    vigil::MethodSpec spec = vigil::MethodSpec::from_json_text(method_spec_json);
    auto handle = std::make_unique<vigil_scorer>();
    handle->scorer = vigil::fit_scorer(spec, train ? &train->ds : nullptr);
    handle->spec_json = handle->scorer->spec().to_json_text();
    *out = handle.release();
  });
}

vigil_status vigil_scorer_save(const vigil_scorer* scorer, const char* path) {
  if (vigil_status s = require_arg(scorer && path, "null argument")) return s;
  return guarded([&] { vigil::save_scorer(*scorer->scorer, path); });
}

vigil_status vigil_scorer_load(const char* path, vigil_scorer** out) {
  if (vigil_status s = require_arg(path && out, "null argument")) return s;
  return guarded([&] {
    auto handle = std::make_unique<vigil_scorer>();
    handle->scorer = vigil::load_scorer(path);
    handle->spec_json = handle->scorer->spec().to_json_text();
    *out = handle.release();
  });
}

const char* vigil_scorer_spec_json(const vigil_scorer* scorer) {
  return scorer ? scorer->spec_json.c_str() : nullptr;
}

vigil_status vigil_scorer_score(const vigil_scorer* scorer,
                                const vigil_dataset* ds, vigil_scores** out) {
  if (vigil_status s = require_arg(scorer && ds && out, "null argument"))
    return s;
  return guarded([&] {
    auto handle = std::make_unique<vigil_scores>();
    handle->traces = vigil::score_dataset(*scorer->scorer, ds->ds);
    *out = handle.release();
  });
}

void vigil_scorer_free(vigil_scorer* scorer) { delete scorer; }

/* ---- score traces ---- */

size_t vigil_scores_count(const vigil_scores* scores) {
  return scores ? scores->traces.size() : 0;
}

const char* vigil_scores_rollout_id(const vigil_scores* scores, size_t index) {
  if (!scores || index >= scores->traces.size()) return nullptr;
  return scores->traces[index].rollout_id.c_str();
}

size_t vigil_scores_length(const vigil_scores* scores, size_t index) {
  if (!scores || index >= scores->traces.size()) return 0;
  return scores->traces[index].values.size();
}

const double* vigil_scores_values(const vigil_scores* scores, size_t index) {
  if (!scores || index >= scores->traces.size()) return nullptr;
  return scores->traces[index].values.data();
}

vigil_status vigil_scores_save_csv(const vigil_scores* scores,
                                   const vigil_dataset* ds, const char* path) {
  if (vigil_status s = require_arg(scores && ds && path, "null argument"))
    return s;
  return guarded([&] { vigil::write_scores_csv(ds->ds, scores->traces, path); });
}

void vigil_scores_free(vigil_scores* scores) { delete scores; }

/* ---- bands ---- */

vigil_status vigil_band_fit(const vigil_scores* calibration, double alpha,
                            size_t horizon, vigil_band** out) {
  if (vigil_status s = require_arg(calibration && out, "null argument"))
    return s;
  return guarded([&] {
    size_t h = horizon;
    if (h == 0)
      for (const auto& tr : calibration->traces)
        h = std::max(h, tr.values.size());
    auto handle = std::make_unique<vigil_band>();
    handle->band = vigil::fit_band(calibration->traces, alpha, h);
    *out = handle.release();
  });
}

vigil_status vigil_band_save(const vigil_band* band, const char* path) {
  if (vigil_status s = require_arg(band && path, "null argument")) return s;
  return guarded([&] { vigil::save_band(band->band, path); });
}

vigil_status vigil_band_load(const char* path, vigil_band** out) {
  if (vigil_status s = require_arg(path && out, "null argument")) return s;
  return guarded([&] {
    auto handle = std::make_unique<vigil_band>();
    handle->band = vigil::load_band(path);
    *out = handle.release();
  });
}

double vigil_band_alpha(const vigil_band* band) {
  return band ? band->band.alpha : 0.0;
}

double vigil_band_quantile(const vigil_band* band) {
  return band ? band->band.q : 0.0;
}

size_t vigil_band_horizon(const vigil_band* band) {
  return band ? band->band.horizon : 0;
}

double vigil_band_upper(const vigil_band* band, size_t step) {
  if (!band || band->band.mu.empty()) return 0.0;
  return band->band.upper(step);
}

vigil_status vigil_band_detect(const vigil_band* band, const double* values,
                               size_t n, int* detected,
                               int64_t* first_exceed_step,
                               double* relative_time) {
  if (vigil_status s = require_arg(band && values && n > 0, "null argument"))
    return s;
  return guarded([&] {
    vigil::Detection det =
        vigil::detect(band->band, std::vector<double>(values, values + n));
    if (detected) *detected = det.detected ? 1 : 0;
    if (first_exceed_step)
      *first_exceed_step = det.first_exceed_step
                               ? static_cast<int64_t>(*det.first_exceed_step)
                               : -1;
    if (relative_time) *relative_time = det.relative_time;
  });
}

void vigil_band_free(vigil_band* band) { delete band; }

/* ---- metrics ---- */

vigil_status vigil_roc_auc(const double* scores, const int32_t* labels,
                           size_t n, double* out) {
  if (vigil_status s = require_arg(scores && labels && out, "null argument"))
    return s;
  return guarded([&] {
    std::vector<double> sv(scores, scores + n);
    std::vector<int> lv(labels, labels + n);
    *out = vigil::roc_auc(sv, lv);
  });
}

vigil_status vigil_max_so_far(const double* values, size_t n, double* out) {
  if (vigil_status s = require_arg(values && out && n > 0, "null argument"))
    return s;
  return guarded([&] {
    std::vector<double> v = vigil::max_so_far(
        std::vector<double>(values, values + n));
    std::copy(v.begin(), v.end(), out);
  });
}

vigil_status vigil_accumulate(const double* values, size_t n, double* out) {
  if (vigil_status s = require_arg(values && out && n > 0, "null argument"))
    return s;
  return guarded([&] {
    std::vector<double> v =
        vigil::accumulate(std::vector<double>(values, values + n));
    std::copy(v.begin(), v.end(), out);
  });
}

/* ---- pipelines ---- */

vigil_status vigil_run_eval(const vigil_dataset* ds,
                            const char* method_spec_json,
                            const char* model_path, size_t n_unseen_tasks,
                            double train_frac, uint64_t split_seed,
                            int with_alpha, double alpha,
                            const char* out_csv_path, char** summary_json) {
  if (vigil_status s = require_arg(ds && method_spec_json, "null argument"))
    return s;
  return guarded([&] {
    vigil::EvalOptions opts;
    opts.split = split_options(n_unseen_tasks, train_frac, split_seed);
    if (with_alpha) opts.alpha = alpha;
    if (model_path) opts.model_path = model_path;
    vigil::EvalSummary summary = vigil::run_eval(
        ds->ds, vigil::MethodSpec::from_json_text(method_spec_json), opts,
        out_csv_path ? out_csv_path : "");
    if (summary_json) {
      nlohmann::json rows = nlohmann::json::array();
      for (const vigil::EvalReport& rep : summary.reports) {
        nlohmann::json row;
        row["split"] = rep.split_tag;
        row["method"] = summary.method_tag;
        row["roc_auc"] = rep.roc_auc;
        row["n_pos"] = rep.n_pos;
        row["n_neg"] = rep.n_neg;
        if (!std::isnan(rep.tpr)) {
          row["tpr"] = rep.tpr;
          row["fpr"] = rep.fpr;
          row["tnr"] = rep.tnr;
          row["bal_acc"] = rep.bal_acc;
          row["t_det"] = rep.t_det;
        }
        rows.push_back(row);
      }
      *summary_json = dup_string(rows.dump());
    }
  });
}

vigil_status vigil_run_sweep(const vigil_dataset* ds,
                             const char* method_spec_json,
                             const char* model_path, size_t n_unseen_tasks,
                             double train_frac, uint64_t split_seed,
                             const double* alphas, size_t n_alphas,
                             const char* out_csv_path) {
  if (vigil_status s = require_arg(ds && method_spec_json && alphas &&
                                       n_alphas > 0 && out_csv_path,
                                   "null argument"))
    return s;
  return guarded([&] {
    vigil::EvalOptions opts;
    opts.split = split_options(n_unseen_tasks, train_frac, split_seed);
    if (model_path) opts.model_path = model_path;
    vigil::run_sweep(ds->ds,
                     vigil::MethodSpec::from_json_text(method_spec_json), opts,
                     std::vector<double>(alphas, alphas + n_alphas),
                     out_csv_path);
  });
}

vigil_status vigil_run_grid(const vigil_dataset* ds, const char* method,
                            const char* grid_json, size_t n_unseen_tasks,
                            double train_frac, uint64_t split_seed,
                            const char* out_csv_path, char** best_spec_json) {
  if (vigil_status s = require_arg(ds && method, "null argument")) return s;
  return guarded([&] {
    vigil::GridResult result = vigil::run_grid(
        ds->ds, method, grid_json ? grid_json : "{}",
        split_options(n_unseen_tasks, train_frac, split_seed),
        out_csv_path ? out_csv_path : "");
    if (best_spec_json)
      *best_spec_json =
          dup_string(result.table[result.best_index].spec.to_json_text());
  });
}

vigil_status vigil_run_calibrate(const vigil_dataset* ds,
                                 const vigil_scorer* scorer,
                                 size_t n_unseen_tasks, double train_frac,
                                 uint64_t split_seed, double alpha,
                                 const char* out_band_path) {
  if (vigil_status s =
          require_arg(ds && scorer && out_band_path, "null argument"))
    return s;
  return guarded([&] {
    vigil::ConformalBand band = vigil::run_calibrate(
        ds->ds, *scorer->scorer,
        split_options(n_unseen_tasks, train_frac, split_seed), alpha);
    vigil::save_band(band, out_band_path);
  });
}

vigil_status vigil_export_embeddings(const vigil_dataset* ds,
                                     const char* agg_json,
                                     const char* out_csv_path) {
  if (vigil_status s = require_arg(ds && out_csv_path, "null argument"))
    return s;
  return guarded([&] {
    vigil::AggregationSpec agg;
    if (agg_json && agg_json[0] != '\0')
      agg = vigil::aggregation_from_json_text(agg_json);
    vigil::export_embeddings_csv(ds->ds, agg, out_csv_path);
  });
}

}  // extern "C"
