#include "vigil/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "vigil/error.hpp"
#include "vigil/io.hpp"

namespace vigil {

namespace {

std::vector<ScoreTrace> split_traces(const Scorer& scorer, const Dataset& ds,
                                     std::vector<int>* labels) {
  std::vector<ScoreTrace> traces = score_dataset(scorer, ds);
  if (labels) {
    labels->clear();
    for (const Rollout& r : ds.rollouts()) labels->push_back(r.label);
  }
  return traces;
}

std::vector<ScoreTrace> success_traces(const Scorer& scorer, const Dataset& ds) {
  std::vector<ScoreTrace> out;
  for (const Rollout& r : ds.rollouts())
    if (r.label == 0) out.push_back(scorer.score(r));
  return out;
}

std::size_t max_trace_len(const std::vector<ScoreTrace>& traces) {
  std::size_t m = 0;
  for (const ScoreTrace& tr : traces) m = std::max(m, tr.values.size());
  return m;
}

std::unique_ptr<Scorer> make_scorer(const Dataset& train, const MethodSpec& spec,
                                    const std::string& model_path) {
  if (!model_path.empty()) return load_scorer(model_path);
  return fit_scorer(spec, method_needs_training(
                              canonical_method(spec.method)) ? &train : nullptr);
}

EvalReport eval_split(const Scorer& scorer, const Dataset& split_ds,
                      const std::string& tag,
                      const std::optional<ConformalBand>& band) {
  EvalReport rep;
  rep.split_tag = tag;
  if (band) {
    std::vector<int> labels;
    std::vector<ScoreTrace> traces = split_traces(scorer, split_ds, &labels);
    rep = confusion_under_band(traces, labels, *band, tag);
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    rep.tpr = rep.fpr = rep.tnr = rep.bal_acc = rep.t_det = nan;
    for (const Rollout& r : split_ds.rollouts())
      (r.label == 1 ? rep.n_pos : rep.n_neg)++;
  }
  rep.roc_auc = dataset_roc_auc(scorer, split_ds, true);
  return rep;
}

}  // namespace

EvalSummary run_eval(const Dataset& ds, const MethodSpec& spec,
                     const EvalOptions& opts, const std::string& out_csv_path) {
  SplitAssignment split = split_dataset(ds, opts.split.n_unseen_tasks,
                                        opts.split.train_frac, opts.split.seed);
  Dataset train = subset(ds, split.train_ids);
  Dataset eval_seen = subset(ds, split.eval_seen_ids);

  std::unique_ptr<Scorer> scorer = make_scorer(train, spec, opts.model_path);

  std::optional<ConformalBand> band;
  if (opts.alpha) {
    std::vector<ScoreTrace> calib = success_traces(*scorer, eval_seen);
    require(!calib.empty(), ErrorCode::InvalidArgument,
            "no successful eval-seen rollouts to calibrate on");
    band = fit_band(calib, *opts.alpha, max_trace_len(calib));
  }

  EvalSummary summary;
  summary.method_tag = scorer->spec().method;
  summary.reports.push_back(eval_split(*scorer, eval_seen, "eval_seen", band));
  if (!split.eval_unseen_ids.empty()) {
    Dataset eval_unseen = subset(ds, split.eval_unseen_ids);
    summary.reports.push_back(
        eval_split(*scorer, eval_unseen, "eval_unseen", band));
  }
  if (!out_csv_path.empty())
    write_text_file(out_csv_path, eval_summary_csv(summary, opts.alpha));
  return summary;
}

SweepCurve run_sweep(const Dataset& ds, const MethodSpec& spec,
                     const EvalOptions& opts, const std::vector<double>& alphas,
                     const std::string& out_csv_path) {
  SplitAssignment split = split_dataset(ds, opts.split.n_unseen_tasks,
                                        opts.split.train_frac, opts.split.seed);
  Dataset train = subset(ds, split.train_ids);
  Dataset eval_seen = subset(ds, split.eval_seen_ids);

  std::unique_ptr<Scorer> scorer = make_scorer(train, spec, opts.model_path);

  std::vector<ScoreTrace> calib = success_traces(*scorer, eval_seen);
  require(!calib.empty(), ErrorCode::InvalidArgument,
          "no successful eval-seen rollouts to calibrate on");

  const std::vector<std::string>& test_ids = split.eval_unseen_ids.empty()
                                                 ? split.eval_seen_ids
                                                 : split.eval_unseen_ids;
  Dataset test = subset(ds, test_ids);
  std::vector<int> labels;
  std::vector<ScoreTrace> test_traces = split_traces(*scorer, test, &labels);

  SweepCurve curve = alpha_sweep(calib, test_traces, labels, alphas);
  if (!out_csv_path.empty())
    write_text_file(out_csv_path, sweep_curve_csv(curve));
  return curve;
}

GridResult run_grid(const Dataset& ds, const std::string& method,
                    const std::string& grid_json_text, const SplitOptions& split_opts,
                    const std::string& out_csv_path) {
  SplitAssignment split = split_dataset(ds, split_opts.n_unseen_tasks,
                                        split_opts.train_frac, split_opts.seed);
  Dataset train = subset(ds, split.train_ids);
  Dataset eval_seen = subset(ds, split.eval_seen_ids);
  GridResult result = grid_search(train, eval_seen, method, grid_json_text);
  if (!out_csv_path.empty())
    write_text_file(out_csv_path, grid_table_csv(result));
  return result;
}

ConformalBand run_calibrate(const Dataset& ds, const Scorer& scorer,
                            const SplitOptions& split_opts, double alpha) {
  SplitAssignment split = split_dataset(ds, split_opts.n_unseen_tasks,
                                        split_opts.train_frac, split_opts.seed);
  Dataset eval_seen = subset(ds, split.eval_seen_ids);
  std::vector<ScoreTrace> calib = success_traces(scorer, eval_seen);
  require(!calib.empty(), ErrorCode::InvalidArgument,
          "no successful eval-seen rollouts to calibrate on");
  return fit_band(calib, alpha, max_trace_len(calib));
}

void write_scores_csv(const Dataset& ds, const std::vector<ScoreTrace>& traces,
                      const std::string& path) {
  require(traces.size() == ds.size(), ErrorCode::InvalidArgument,
          "traces do not match the dataset");
  std::string out = csv_line({"rollout_id", "task_id", "label", "step",
                              "score", "method"});
  for (std::size_t i = 0; i < traces.size(); ++i) {
    const Rollout& r = ds.rollouts()[i];
    require(traces[i].rollout_id == r.rollout_id, ErrorCode::InvalidArgument,
            "trace order does not match the dataset");
    for (std::size_t t = 0; t < traces[i].values.size(); ++t)
      out += csv_line({r.rollout_id, r.task_id, std::to_string(r.label),
                       std::to_string(t), format_double(traces[i].values[t]),
                       traces[i].method_tag});
  }
  write_text_file(path, out);
}

void export_embeddings_csv(const Dataset& ds, const AggregationSpec& agg,
                           const std::string& path) {
  require(ds.size() > 0, ErrorCode::InvalidArgument, "empty dataset");
  AggregationSpec spec = agg;
  const EmbeddingTensor& shape = ds.rollouts().front().steps.front().embedding;
  require(!shape.empty(), ErrorCode::InvalidArgument,
          "dataset has no embeddings");
  if (!spec.token_method && !spec.hori_method)
    spec = AggregationSpec::defaults_for(shape.layout);
  const int dim = aggregated_dim(shape, spec);

  std::vector<std::string> header = {"rollout_id", "task_id", "label", "step"};
  for (int i = 0; i < dim; ++i) header.push_back("e" + std::to_string(i));
  std::string out = csv_line(header);
  for (const Rollout& r : ds.rollouts()) {
    Eigen::MatrixXd emb = rollout_embeddings(r, spec);
    for (long t = 0; t < emb.rows(); ++t) {
      std::vector<std::string> row = {r.rollout_id, r.task_id,
                                      std::to_string(r.label),
                                      std::to_string(t)};
      for (long j = 0; j < emb.cols(); ++j)
        row.push_back(format_double(emb(t, j)));
      out += csv_line(row);
    }
  }
  write_text_file(path, out);
}

std::string eval_summary_csv(const EvalSummary& summary,
                             const std::optional<double>& alpha) {
  std::string out =
      csv_line({"split", "method", "roc_auc", "n_pos", "n_neg", "alpha", "tpr",
                "fpr", "tnr", "bal_acc", "t_det"});
  for (const EvalReport& rep : summary.reports)
    out += csv_line({rep.split_tag, summary.method_tag,
                     format_double(rep.roc_auc), std::to_string(rep.n_pos),
                     std::to_string(rep.n_neg),
                     alpha ? format_double(*alpha) : "",
                     std::isnan(rep.tpr) ? "" : format_double(rep.tpr),
                     std::isnan(rep.fpr) ? "" : format_double(rep.fpr),
                     std::isnan(rep.tnr) ? "" : format_double(rep.tnr),
                     std::isnan(rep.bal_acc) ? "" : format_double(rep.bal_acc),
                     std::isnan(rep.t_det) ? "" : format_double(rep.t_det)});
  return out;
}

std::string sweep_curve_csv(const SweepCurve& curve) {
  std::string out = csv_line({"alpha", "bal_acc", "t_det", "tpr", "fpr"});
  for (const SweepPoint& p : curve.points)
    out += csv_line({format_double(p.alpha), format_double(p.bal_acc),
                     format_double(p.t_det), format_double(p.tpr),
                     format_double(p.fpr)});
  return out;
}

std::string grid_table_csv(const GridResult& grid) {
  std::string out = csv_line({"config_index", "eval_seen_roc_auc", "best", "spec"});
  for (std::size_t i = 0; i < grid.table.size(); ++i)
    out += csv_line({std::to_string(i),
                     format_double(grid.table[i].eval_seen_auc),
                     i == grid.best_index ? "1" : "0",
                     grid.table[i].spec.to_json_text()});
  return out;
}

}  // namespace vigil
