#ifndef VIGIL_PIPELINE_HPP
#define VIGIL_PIPELINE_HPP

#include <optional>
#include <string>
#include <vector>

#include "vigil/conformal.hpp"
#include "vigil/eval.hpp"
#include "vigil/methods.hpp"
#include "vigil/trace.hpp"

namespace vigil {

// Split parameters shared by every pipeline entry point; the assignment is
// recomputed deterministically from (dataset, these fields).
struct SplitOptions {
  std::size_t n_unseen_tasks = 0;
  double train_frac = 0.6;
  std::uint64_t seed = 0;
};

struct EvalOptions {
  SplitOptions split;
  std::optional<double> alpha;  // adds band-based confusion metrics
  std::string model_path;       // load a trained model instead of fitting
};

struct EvalSummary {
  std::string method_tag;
  std::vector<EvalReport> reports;  // eval_seen, then eval_unseen if present
};

// Fits (or loads) the scorer, reports max-so-far ROC-AUC per eval split with
// per-task length truncation, and, when alpha is set, band-based confusion
// metrics calibrated on eval-seen successes. Writes one CSV row per split.
EvalSummary run_eval(const Dataset& ds, const MethodSpec& spec,
                     const EvalOptions& opts, const std::string& out_csv_path);

// CP alpha sweep: calibrates on eval-seen successes, evaluates on the unseen
// split (or eval-seen when no tasks are held out). One CSV row per alpha.
SweepCurve run_sweep(const Dataset& ds, const MethodSpec& spec,
                     const EvalOptions& opts, const std::vector<double>& alphas,
                     const std::string& out_csv_path);

// Grid search on eval-seen ROC-AUC; writes the full audit table.
GridResult run_grid(const Dataset& ds, const std::string& method,
                    const std::string& grid_json_text, const SplitOptions& split,
                    const std::string& out_csv_path);

// Calibrates a band at alpha from eval-seen successful rollouts.
ConformalBand run_calibrate(const Dataset& ds, const Scorer& scorer,
                            const SplitOptions& split, double alpha);

void write_scores_csv(const Dataset& ds, const std::vector<ScoreTrace>& traces,
                      const std::string& path);

void export_embeddings_csv(const Dataset& ds, const AggregationSpec& agg,
                           const std::string& path);

std::string eval_summary_csv(const EvalSummary& summary,
                             const std::optional<double>& alpha);
std::string sweep_curve_csv(const SweepCurve& curve);
std::string grid_table_csv(const GridResult& grid);

}  // namespace vigil

#endif
