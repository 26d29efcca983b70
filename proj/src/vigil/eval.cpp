#include "vigil/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vigil/error.hpp"

namespace vigil {

std::vector<double> max_so_far(const std::vector<double>& values) {
  require(!values.empty(), ErrorCode::InvalidArgument, "empty trace");
  std::vector<double> out(values.size());
  double run = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < values.size(); ++i) {
    run = std::max(run, values[i]);
    out[i] = run;
  }
  return out;
}

ScoreTrace max_so_far(const ScoreTrace& trace) {
  ScoreTrace out = trace;
  out.values = max_so_far(trace.values);
  return out;
}

double roc_auc(const std::vector<double>& final_scores,
               const std::vector<int>& labels) {
  require(final_scores.size() == labels.size(), ErrorCode::InvalidArgument,
          "scores and labels length mismatch");
  require(!final_scores.empty(), ErrorCode::InvalidArgument, "empty input");
  std::size_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    require(y == 0 || y == 1, ErrorCode::InvalidArgument,
            "labels must be 0 or 1");
    (y == 1 ? n_pos : n_neg)++;
  }
  require(n_pos > 0 && n_neg > 0, ErrorCode::SingleClass,
          "ROC-AUC needs both classes");
  for (double s : final_scores)
    require(std::isfinite(s), ErrorCode::Numeric, "non-finite score");

  const std::size_t n = final_scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return final_scores[a] < final_scores[b];
  });

  // average ranks over tie groups, 1-based
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n &&
           final_scores[order[j + 1]] == final_scores[order[i]])
      ++j;
    const double avg_rank = 0.5 * (static_cast<double>(i) +
                                   static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      if (labels[order[k]] == 1) rank_sum_pos += avg_rank;
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double nn = static_cast<double>(n_neg);
  return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

EvalReport confusion_under_band(const std::vector<ScoreTrace>& traces,
                                const std::vector<int>& labels,
                                const ConformalBand& band,
                                const std::string& split_tag) {
  require(traces.size() == labels.size(), ErrorCode::InvalidArgument,
          "traces and labels length mismatch");
  require(!traces.empty(), ErrorCode::InvalidArgument, "empty split");

  EvalReport rep;
  rep.split_tag = split_tag;
  std::size_t tp = 0, fp = 0;
  double t_det_sum = 0.0;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    Detection det = detect(band, traces[i]);
    if (labels[i] == 1) {
      ++rep.n_pos;
      if (det.detected) ++tp;
      t_det_sum += det.relative_time;
    } else {
      ++rep.n_neg;
      if (det.detected) ++fp;
    }
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  rep.tpr = rep.n_pos > 0 ? static_cast<double>(tp) / rep.n_pos : nan;
  rep.fpr = rep.n_neg > 0 ? static_cast<double>(fp) / rep.n_neg : nan;
  rep.tnr = rep.n_neg > 0 ? 1.0 - rep.fpr : nan;
  rep.bal_acc =
      (rep.n_pos > 0 && rep.n_neg > 0) ? 0.5 * (rep.tpr + rep.tnr) : nan;
  rep.t_det = rep.n_pos > 0 ? t_det_sum / rep.n_pos : nan;
  rep.roc_auc = nan;  // caller fills it from max-so-far final scores
  return rep;
}

SweepCurve alpha_sweep(const std::vector<ScoreTrace>& calibration_successes,
                       const std::vector<ScoreTrace>& test_traces,
                       const std::vector<int>& test_labels,
                       const std::vector<double>& alphas) {
  require(!alphas.empty(), ErrorCode::InvalidArgument, "empty alpha list");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    require(alphas[i] > 0.0 && alphas[i] < 1.0, ErrorCode::InvalidArgument,
            "alphas must lie in (0,1)");
    if (i > 0)
      require(alphas[i] > alphas[i - 1], ErrorCode::InvalidArgument,
              "alphas must be strictly increasing");
  }
  std::size_t horizon = 0;
  for (const ScoreTrace& tr : calibration_successes)
    horizon = std::max(horizon, tr.values.size());

  SweepCurve curve;
  for (double alpha : alphas) {
    ConformalBand band = fit_band(calibration_successes, alpha, horizon);
    EvalReport rep = confusion_under_band(test_traces, test_labels, band);
    curve.points.push_back({alpha, rep.bal_acc, rep.t_det, rep.tpr, rep.fpr});
  }
  return curve;
}

}  // namespace vigil
