#include "vigil/trace.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "vigil/error.hpp"
#include "vigil/rng.hpp"

namespace vigil {

namespace {

bool same_optional_shape(const std::optional<Eigen::MatrixXd>& a,
                         const std::optional<Eigen::MatrixXd>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  return a->rows() == b->rows() && a->cols() == b->cols();
}

}  // namespace

void validate_rollout(const Rollout& r) {
  require(!r.rollout_id.empty(), ErrorCode::Format, "rollout_id is empty");
  require(!r.steps.empty(), ErrorCode::Format,
          "rollout '" + r.rollout_id + "' has no steps");
  require(r.label == 0 || r.label == 1, ErrorCode::Format,
          "rollout '" + r.rollout_id + "' label must be 0 or 1");
  require(r.replan_stride >= 1, ErrorCode::Format,
          "rollout '" + r.rollout_id + "' replan_stride must be >= 1");

  const RolloutStep& first = r.steps.front();
  for (std::size_t i = 0; i < r.steps.size(); ++i) {
    const RolloutStep& s = r.steps[i];
    const std::string at =
        "rollout '" + r.rollout_id + "' step " + std::to_string(i);

    require(s.embedding.same_shape(first.embedding), ErrorCode::Format,
            at + ": embedding shape differs from step 0");
    require(s.embedding.data.size() == s.embedding.expected_size(),
            ErrorCode::Format, at + ": embedding data length mismatch");

    require(s.token_probs.has_value() == first.token_probs.has_value(),
            ErrorCode::Format, at + ": token_probs presence differs");
    if (s.token_probs) {
      require(s.token_probs->size() == first.token_probs->size(),
              ErrorCode::Format, at + ": token_probs length differs");
      for (double p : *s.token_probs)
        require(p > 0.0 && p <= 1.0, ErrorCode::Format,
                at + ": token probability outside (0,1]");
    }
    require(s.token_entropies.has_value() == first.token_entropies.has_value(),
            ErrorCode::Format, at + ": token_entropies presence differs");
    if (s.token_entropies) {
      require(s.token_entropies->size() == first.token_entropies->size(),
              ErrorCode::Format, at + ": token_entropies length differs");
      for (double h : *s.token_entropies)
        require(h >= 0.0 && std::isfinite(h), ErrorCode::Format,
                at + ": token entropy must be finite and >= 0");
    }

    require(same_optional_shape(s.action_chunk, first.action_chunk),
            ErrorCode::Format, at + ": action_chunk shape differs");
    require(s.action_samples.has_value() == first.action_samples.has_value(),
            ErrorCode::Format, at + ": action_samples presence differs");
    if (s.action_samples) {
      require(!s.action_samples->empty(), ErrorCode::Format,
              at + ": action_samples present but empty");
      require(s.action_samples->size() == first.action_samples->size(),
              ErrorCode::Format, at + ": sample count differs");
      const Eigen::MatrixXd& ref = first.action_samples->front();
      for (const Eigen::MatrixXd& m : *s.action_samples)
        require(m.rows() == ref.rows() && m.cols() == ref.cols(),
                ErrorCode::Format, at + ": sample shapes differ");
    }
  }

  if (first.action_chunk) {
    require(r.replan_stride <= first.action_chunk->rows(), ErrorCode::Format,
            "rollout '" + r.rollout_id +
                "' replan_stride exceeds chunk horizon");
  }
}

Dataset::Dataset(std::vector<Rollout> rollouts) : rollouts_(std::move(rollouts)) {
  std::sort(rollouts_.begin(), rollouts_.end(),
            [](const Rollout& a, const Rollout& b) {
              return a.rollout_id < b.rollout_id;
            });
  for (std::size_t i = 0; i < rollouts_.size(); ++i) {
    validate_rollout(rollouts_[i]);
    if (i > 0)
      require(rollouts_[i].rollout_id != rollouts_[i - 1].rollout_id,
              ErrorCode::Format,
              "duplicate rollout_id '" + rollouts_[i].rollout_id + "'");
    task_index_[rollouts_[i].task_id].push_back(i);
  }
}

const Rollout* Dataset::find(const std::string& rollout_id) const {
  auto it = std::lower_bound(
      rollouts_.begin(), rollouts_.end(), rollout_id,
      [](const Rollout& r, const std::string& id) { return r.rollout_id < id; });
  if (it == rollouts_.end() || it->rollout_id != rollout_id) return nullptr;
  return &*it;
}

std::optional<SplitRole> SplitAssignment::role_of(
    const std::string& rollout_id) const {
  auto contains = [&](const std::vector<std::string>& v) {
    return std::binary_search(v.begin(), v.end(), rollout_id);
  };
  if (contains(train_ids)) return SplitRole::Train;
  if (contains(eval_seen_ids)) return SplitRole::EvalSeen;
  if (contains(eval_unseen_ids)) return SplitRole::EvalUnseen;
  return std::nullopt;
}

const std::vector<std::string>& SplitAssignment::ids(SplitRole role) const {
  switch (role) {
    case SplitRole::Train: return train_ids;
    case SplitRole::EvalSeen: return eval_seen_ids;
    case SplitRole::EvalUnseen: return eval_unseen_ids;
  }
  return train_ids;
}

SplitAssignment split_dataset(const Dataset& ds, std::size_t n_unseen_tasks,
                              double train_frac, std::uint64_t seed) {
  require(train_frac > 0.0 && train_frac < 1.0, ErrorCode::InvalidArgument,
          "train_frac must lie in (0,1)");
  require(ds.task_count() > n_unseen_tasks, ErrorCode::InvalidArgument,
          "dataset must have more tasks than n_unseen_tasks");
  for (const auto& [task, idx] : ds.task_index())
    require(idx.size() >= 2, ErrorCode::InvalidArgument,
            "task '" + task + "' has fewer than 2 rollouts");

  std::vector<std::string> tasks;
  tasks.reserve(ds.task_count());
  for (const auto& [task, idx] : ds.task_index()) tasks.push_back(task);

  Rng rng(seed);
  rng.shuffle(tasks);

  SplitAssignment out;
  out.seed = seed;
  out.unseen_task_ids.assign(tasks.begin(),
                             tasks.begin() + static_cast<long>(n_unseen_tasks));
  std::sort(out.unseen_task_ids.begin(), out.unseen_task_ids.end());

  std::set<std::string> unseen(out.unseen_task_ids.begin(),
                               out.unseen_task_ids.end());
  for (const auto& [task, idx] : ds.task_index()) {
    std::vector<std::string> ids;
    ids.reserve(idx.size());
    for (std::size_t i : idx) ids.push_back(ds.rollouts()[i].rollout_id);
    std::sort(ids.begin(), ids.end());
    if (unseen.count(task)) {
      out.eval_unseen_ids.insert(out.eval_unseen_ids.end(), ids.begin(),
                                 ids.end());
      continue;
    }
    rng.shuffle(ids);
    std::size_t n_train =
        static_cast<std::size_t>(std::floor(train_frac * ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i)
      (i < n_train ? out.train_ids : out.eval_seen_ids).push_back(ids[i]);
  }

  std::sort(out.train_ids.begin(), out.train_ids.end());
  std::sort(out.eval_seen_ids.begin(), out.eval_seen_ids.end());
  std::sort(out.eval_unseen_ids.begin(), out.eval_unseen_ids.end());
  return out;
}

Dataset truncate_to_min_length(const Dataset& ds) {
  require(ds.size() > 0, ErrorCode::InvalidArgument, "dataset is empty");
  std::map<std::string, std::size_t> min_len;
  for (const auto& [task, idx] : ds.task_index()) {
    std::size_t m = ds.rollouts()[idx.front()].length();
    for (std::size_t i : idx) m = std::min(m, ds.rollouts()[i].length());
    min_len[task] = m;
  }
  std::vector<Rollout> out = ds.rollouts();
  for (Rollout& r : out) r.steps.resize(min_len.at(r.task_id));
  return Dataset(std::move(out));
}

Dataset subset(const Dataset& ds, const std::vector<std::string>& ids) {
  std::vector<Rollout> out;
  out.reserve(ids.size());
  for (const std::string& id : ids) {
    const Rollout* r = ds.find(id);
    require(r != nullptr, ErrorCode::InvalidArgument,
            "rollout_id '" + id + "' not in dataset");
    out.push_back(*r);
  }
  return Dataset(std::move(out));
}

}  // namespace vigil
