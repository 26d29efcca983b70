#ifndef VIGIL_EVAL_HPP
#define VIGIL_EVAL_HPP

#include <string>
#include <vector>

#include "vigil/conformal.hpp"
#include "vigil/scores.hpp"

namespace vigil {

// Detection quality on one split. Rate fields are NaN when the relevant
// class is absent rather than silently made up.
struct EvalReport {
  double roc_auc = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
  double tnr = 0.0;
  double bal_acc = 0.0;
  double t_det = 1.0;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::string split_tag;
};

struct SweepPoint {
  double alpha;
  double bal_acc;
  double t_det;
  double tpr;
  double fpr;
};

struct SweepCurve {
  std::vector<SweepPoint> points;
};

// Running maximum; the final value feeds the ROC ranking.
std::vector<double> max_so_far(const std::vector<double>& values);
ScoreTrace max_so_far(const ScoreTrace& trace);

// Probability a random positive outranks a random negative; ties count 1/2
// (rank / Mann-Whitney formulation with average ranks).
double roc_auc(const std::vector<double>& final_scores,
               const std::vector<int>& labels);

// Flags each trace through the band; a rollout counts positive when the
// detector ever fires. t_det averages relative detection time over failures.
EvalReport confusion_under_band(const std::vector<ScoreTrace>& traces,
                                const std::vector<int>& labels,
                                const ConformalBand& band,
                                const std::string& split_tag = "");

// One band fit + confusion evaluation per alpha. Calibration traces must
// come from successful rollouts only; alphas strictly increasing in (0,1).
SweepCurve alpha_sweep(const std::vector<ScoreTrace>& calibration_successes,
                       const std::vector<ScoreTrace>& test_traces,
                       const std::vector<int>& test_labels,
                       const std::vector<double>& alphas);

}  // namespace vigil

#endif
