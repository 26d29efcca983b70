#ifndef VIGIL_TRACE_HPP
#define VIGIL_TRACE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vigil {

// Internal policy features recorded at one decision step. Either a
// (token x feat) matrix from token-decoding policies or a
// (horizon x diffusion x feat) tensor from flow-matching policies.
enum class EmbeddingLayout { None, TokenFeat, HoriDiffFeat };

struct EmbeddingTensor {
  EmbeddingLayout layout = EmbeddingLayout::None;
  int rows = 0;   // token positions n (TokenFeat)
  int hori = 0;   // chunk horizon H (HoriDiffFeat)
  int diff = 0;   // diffusion/flow steps k (HoriDiffFeat)
  int feat = 0;   // feature dimension
  std::vector<double> data;  // row-major: [rows][feat] or [hori][diff][feat]

  bool empty() const { return layout == EmbeddingLayout::None; }
  std::size_t expected_size() const {
    if (layout == EmbeddingLayout::TokenFeat)
      return static_cast<std::size_t>(rows) * feat;
    if (layout == EmbeddingLayout::HoriDiffFeat)
      return static_cast<std::size_t>(hori) * diff * feat;
    return 0;
  }
  bool same_shape(const EmbeddingTensor& o) const {
    return layout == o.layout && rows == o.rows && hori == o.hori &&
           diff == o.diff && feat == o.feat;
  }
};

// One decision step of a rollout. Optional fields are populated per policy
// family; all steps within a rollout carry identical shapes.
struct RolloutStep {
  EmbeddingTensor embedding;
  std::optional<std::vector<double>> token_probs;      // p_i in (0,1]
  std::optional<std::vector<double>> token_entropies;  // H_i >= 0, natural log
  std::optional<Eigen::MatrixXd> action_chunk;         // H x a
  std::optional<std::vector<Eigen::MatrixXd>> action_samples;  // K of H x a
  std::optional<std::string> observation_ref;
};

// One policy execution, labeled at the trajectory level (1 = failure).
// Steps are indexed by decision count; replan_stride is carried as metadata.
struct Rollout {
  std::string rollout_id;
  std::string task_id;
  int label = 0;
  int replan_stride = 1;
  std::vector<RolloutStep> steps;

  std::size_t length() const { return steps.size(); }
};

// Throws on violated invariants (empty steps, bad label, inconsistent
// shapes across steps, out-of-range token stats).
void validate_rollout(const Rollout& r);

class Dataset {
 public:
  Dataset() = default;
  // Sorts rollouts by id, validates each, builds the task index.
  explicit Dataset(std::vector<Rollout> rollouts);

  const std::vector<Rollout>& rollouts() const { return rollouts_; }
  const std::map<std::string, std::vector<std::size_t>>& task_index() const {
    return task_index_;
  }
  std::size_t size() const { return rollouts_.size(); }
  std::size_t task_count() const { return task_index_.size(); }
  const Rollout* find(const std::string& rollout_id) const;

 private:
  std::vector<Rollout> rollouts_;
  std::map<std::string, std::vector<std::size_t>> task_index_;
};

enum class SplitRole { Train, EvalSeen, EvalUnseen };

struct SplitAssignment {
  std::vector<std::string> unseen_task_ids;  // sorted
  std::vector<std::string> train_ids;        // sorted
  std::vector<std::string> eval_seen_ids;    // sorted
  std::vector<std::string> eval_unseen_ids;  // sorted
  std::uint64_t seed = 0;

  std::optional<SplitRole> role_of(const std::string& rollout_id) const;
  const std::vector<std::string>& ids(SplitRole role) const;
};

// Reserves n_unseen_tasks whole tasks for eval-unseen and splits each seen
// task train/eval-seen at train_frac. Deterministic per seed.
SplitAssignment split_dataset(const Dataset& ds, std::size_t n_unseen_tasks,
                              double train_frac, std::uint64_t seed);

// Cuts every rollout to its task's minimum step count. Idempotent.
Dataset truncate_to_min_length(const Dataset& ds);

// New dataset holding only the listed rollouts (ids must exist).
Dataset subset(const Dataset& ds, const std::vector<std::string>& ids);

}  // namespace vigil

#endif
