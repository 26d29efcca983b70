#ifndef VIGIL_TESTS_HELPERS_HPP
#define VIGIL_TESTS_HELPERS_HPP

#include <filesystem>
#include <random>
#include <string>

#include "vigil/rng.hpp"
#include "vigil/trace.hpp"

namespace vigil::testing {

// rollout with a (rows x feat) token-layout embedding per step
inline Rollout make_rollout(const std::string& id, const std::string& task,
                            int label, int steps, int feat = 2, int rows = 1,
                            std::uint64_t seed = 0) {
  Rng rng(derive_seed(seed, std::hash<std::string>{}(id)));
  Rollout r;
  r.rollout_id = id;
  r.task_id = task;
  r.label = label;
  r.steps.resize(static_cast<std::size_t>(steps));
  for (RolloutStep& s : r.steps) {
    s.embedding.layout = EmbeddingLayout::TokenFeat;
    s.embedding.rows = rows;
    s.embedding.feat = feat;
    s.embedding.data.resize(static_cast<std::size_t>(rows) * feat);
    for (double& x : s.embedding.data) x = rng.normal();
  }
  return r;
}

inline Dataset grid_dataset(int n_tasks, int per_task, int steps = 5,
                            std::uint64_t seed = 0) {
  std::vector<Rollout> rollouts;
  for (int t = 0; t < n_tasks; ++t)
    for (int r = 0; r < per_task; ++r)
      rollouts.push_back(make_rollout(
          "t" + std::to_string(t) + "_r" + std::to_string(r),
          "t" + std::to_string(t), r % 2, steps, 2, 1, seed));
  return Dataset(std::move(rollouts));
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("vigil_test_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& child = "") const {
    return child.empty() ? path_.string() : (path_ / child).string();
  }

 private:
  std::filesystem::path path_;
};

}  // namespace vigil::testing

#endif
