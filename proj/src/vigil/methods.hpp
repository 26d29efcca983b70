#ifndef VIGIL_METHODS_HPP
#define VIGIL_METHODS_HPP

#include <memory>
#include <string>
#include <vector>

#include "vigil/aggregate.hpp"
#include "vigil/probes.hpp"
#include "vigil/scores.hpp"
#include "vigil/trace.hpp"

namespace vigil {

// One entry of the score-method registry: the canonical method name plus
// every hyperparameter any method reads. CLI flags, grid axes, and model
// files all round-trip through this struct.
struct MethodSpec {
  std::string method;  // canonical snake_case operation name
  bool cumsum = false;
  AggregationSpec agg;            // embedding-consuming methods
  std::string metric = "mahalanobis";  // embedding_distance_score
  int k = 10;
  int pca_dim = 32;
  int clusters = 16;
  std::string subspace = "all";   // total_variation
  double cluster_delta = 0.1;     // cluster_entropy
  double bandwidth = 1.0;         // stac methods
  int hidden = 256;               // learned probes
  TrainConfig train;

  static MethodSpec from_json_text(const std::string& text);
  std::string to_json_text() const;
};

// Aggregation-spec JSON object ({"token": "mean"} or
// {"hori": "...", "diff": "..."}, optional "variant").
AggregationSpec aggregation_from_json_text(const std::string& text);

// Canonical registry names; aliases like "mlp" or "mahalanobis" resolve onto
// them.
const std::vector<std::string>& method_names();
std::string canonical_method(const std::string& name, MethodSpec* spec = nullptr);
bool method_needs_training(const std::string& canonical);

class Scorer {
 public:
  explicit Scorer(MethodSpec spec) : spec_(std::move(spec)) {}
  virtual ~Scorer() = default;

  const MethodSpec& spec() const { return spec_; }
  ScoreTrace score(const Rollout& r) const;  // applies the cumsum flag

  // serializable fitted state (weights, banks); empty object when stateless
  virtual std::string state_json_text() const;

 protected:
  virtual std::vector<double> raw_scores(const Rollout& r) const = 0;
  MethodSpec spec_;
};

// Builds a scorer; train may be null for stateless methods and must hold
// both classes for learned/bank-backed ones.
std::unique_ptr<Scorer> fit_scorer(const MethodSpec& spec, const Dataset* train);

void save_scorer(const Scorer& scorer, const std::string& path);
std::unique_ptr<Scorer> load_scorer(const std::string& path);

std::vector<ScoreTrace> score_dataset(const Scorer& scorer, const Dataset& ds);

// ROC-AUC of max-so-far final scores over a dataset; when truncate_per_task
// is set, traces are cut at their task's minimum length first.
double dataset_roc_auc(const Scorer& scorer, const Dataset& ds,
                       bool truncate_per_task = true);

struct GridEntry {
  MethodSpec spec;
  double eval_seen_auc = 0.0;
};

struct GridResult {
  std::vector<GridEntry> table;
  std::size_t best_index = 0;
};

// Exhaustive search over the cartesian product of the JSON grid axes
// ({"field": [values...], ...}); ties keep the earliest entry. Axis order in
// the file fixes the expansion order (first axis outermost).
GridResult grid_search(const Dataset& train, const Dataset& eval_seen,
                       const std::string& method, const std::string& grid_json_text);

}  // namespace vigil

#endif
