#include <doctest.h>

#include <cmath>

#include "vigil/error.hpp"
#include "vigil/eval.hpp"
#include "vigil/io.hpp"
#include "vigil/synth.hpp"

using namespace vigil;

namespace {

SynthConfig small_config(std::uint64_t seed) {
  SynthConfig cfg;
  cfg.n_tasks = 4;
  cfg.n_unseen_tasks = 1;
  cfg.rollouts_per_task = 12;
  cfg.fail_rate = 0.5;
  cfg.feat_dim = 8;
  cfg.rollout_len = 20;
  cfg.separation = 6.0;
  cfg.noise_sigma = 0.1;
  cfg.seed = seed;
  return cfg;
}

Eigen::VectorXd step_mean_embedding(const RolloutStep& s) {
  const EmbeddingTensor& e = s.embedding;
  Eigen::VectorXd out = Eigen::VectorXd::Zero(e.feat);
  const int reps = static_cast<int>(e.data.size()) / e.feat;
  for (int r = 0; r < reps; ++r)
    for (int f = 0; f < e.feat; ++f)
      out(f) += e.data[static_cast<std::size_t>(r) * e.feat + f];
  return out / reps;
}

// ROC-AUC of the generator-internals oracle: distance to the failure center
// minus distance to the rollout's own task center, max over steps
double bayes_oracle_auc(const SynthResult& sr) {
  std::vector<double> scores;
  std::vector<int> labels;
  for (const Rollout& r : sr.dataset.rollouts()) {
    const auto& c_task = sr.meta.task_centers.at(r.task_id);
    const auto& c_fail = sr.meta.fail_center;
    Eigen::Map<const Eigen::VectorXd> ct(c_task.data(),
                                         static_cast<long>(c_task.size()));
    Eigen::Map<const Eigen::VectorXd> cf(c_fail.data(),
                                         static_cast<long>(c_fail.size()));
    double best = -1e300;
    for (const RolloutStep& s : r.steps) {
      Eigen::VectorXd e = step_mean_embedding(s);
      best = std::max(best, (e - ct).norm() - (e - cf).norm());
    }
    scores.push_back(best);
    labels.push_back(r.label);
  }
  return roc_auc(scores, labels);
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("generation is deterministic per seed") {
  SynthResult a = generate(small_config(5));
  SynthResult b = generate(small_config(5));
  REQUIRE(a.dataset.size() == b.dataset.size());
  for (std::size_t i = 0; i < a.dataset.size(); ++i) {
    const Rollout& ra = a.dataset.rollouts()[i];
    const Rollout& rb = b.dataset.rollouts()[i];
    CHECK(rollout_to_jsonl(ra) == rollout_to_jsonl(rb));
  }
  SynthResult c = generate(small_config(6));
  CHECK(rollout_to_jsonl(a.dataset.rollouts()[0]) !=
        rollout_to_jsonl(c.dataset.rollouts()[0]));
}

TEST_CASE("labels follow the configured failure rate") {
  SynthResult sr = generate(small_config(1));
  for (const auto& [task, idx] : sr.dataset.task_index()) {
    int fails = 0;
    for (std::size_t i : idx) fails += sr.dataset.rollouts()[i].label;
    CHECK(fails == 6);  // round(0.5 * 12)
  }
  CHECK(sr.dataset.size() == 48);
  CHECK(sr.dataset.task_count() == 4);
}

TEST_CASE("onset metadata is recorded for every failure") {
  SynthConfig cfg = small_config(2);
  cfg.onset_lo = 0.3;
  cfg.onset_hi = 0.6;
  SynthResult sr = generate(cfg);
  for (const Rollout& r : sr.dataset.rollouts()) {
    if (r.label == 0) {
      CHECK(sr.meta.onset_step.count(r.rollout_id) == 0);
      continue;
    }
    REQUIRE(sr.meta.onset_step.count(r.rollout_id) == 1);
    const int onset = sr.meta.onset_step.at(r.rollout_id);
    CHECK(onset >= static_cast<int>(0.3 * cfg.rollout_len) - 1);
    CHECK(onset <= static_cast<int>(0.6 * cfg.rollout_len) + 1);
    CHECK(sr.meta.onset_rel.at(r.rollout_id) ==
          doctest::Approx((onset + 1.0) / cfg.rollout_len));
  }
}

TEST_CASE("failed rollouts end up at the shared failure center") {
  SynthConfig cfg = small_config(3);
  SynthResult sr = generate(cfg);
  Eigen::Map<const Eigen::VectorXd> cf(sr.meta.fail_center.data(),
                                       cfg.feat_dim);
  const double tol = 5.0 * cfg.noise_sigma * std::sqrt(cfg.feat_dim);
  for (const Rollout& r : sr.dataset.rollouts()) {
    if (r.label != 1) continue;
    Eigen::VectorXd terminal = step_mean_embedding(r.steps.back());
    CHECK((terminal - cf).norm() < tol);
  }
}

TEST_CASE("pre-onset failure steps match the success distribution") {
  SynthConfig cfg = small_config(4);
  cfg.rollouts_per_task = 30;
  SynthResult sr = generate(cfg);
  for (const auto& [task, idx] : sr.dataset.task_index()) {
    Eigen::VectorXd succ_mean = Eigen::VectorXd::Zero(cfg.feat_dim);
    Eigen::VectorXd pre_mean = Eigen::VectorXd::Zero(cfg.feat_dim);
    long n_succ = 0, n_pre = 0;
    for (std::size_t i : idx) {
      const Rollout& r = sr.dataset.rollouts()[i];
      const int onset = r.label
                            ? sr.meta.onset_step.at(r.rollout_id)
                            : static_cast<int>(r.length());
      for (int t = 0; t < static_cast<int>(r.length()); ++t) {
        Eigen::VectorXd e =
            step_mean_embedding(r.steps[static_cast<std::size_t>(t)]);
        if (r.label == 0) {
          succ_mean += e;
          ++n_succ;
        } else if (t < onset) {
          pre_mean += e;
          ++n_pre;
        }
      }
    }
    succ_mean /= static_cast<double>(n_succ);
    pre_mean /= static_cast<double>(n_pre);
    // means agree within Monte-Carlo tolerance
    const double se = cfg.noise_sigma *
                      std::sqrt(1.0 / n_succ + 1.0 / n_pre) *
                      std::sqrt(static_cast<double>(cfg.feat_dim));
    CHECK((succ_mean - pre_mean).norm() < 6.0 * se);
  }
}

TEST_CASE("task centers sit at the configured chord from the failure zone") {
  SynthConfig cfg = small_config(7);
  SynthResult sr = generate(cfg);
  Eigen::Map<const Eigen::VectorXd> cf(sr.meta.fail_center.data(),
                                       cfg.feat_dim);
  for (const auto& [task, center] : sr.meta.task_centers) {
    Eigen::Map<const Eigen::VectorXd> ct(center.data(), cfg.feat_dim);
    CHECK(ct.norm() == doctest::Approx(1.0).epsilon(1e-9));
    CHECK((ct - cf).norm() ==
          doctest::Approx(cfg.separation * cfg.noise_sigma).epsilon(1e-9));
  }
}

TEST_CASE("shared zone pulls cross-task failures together") {
  SynthConfig cfg = small_config(8);
  cfg.feat_dim = 16;
  SynthResult sr = generate(cfg);
  double fail_dist = 0, succ_dist = 0;
  long n_fail = 0, n_succ = 0;
  const auto& rollouts = sr.dataset.rollouts();
  for (std::size_t i = 0; i < rollouts.size(); ++i) {
    for (std::size_t j = i + 1; j < rollouts.size(); ++j) {
      if (rollouts[i].task_id == rollouts[j].task_id) continue;
      if (rollouts[i].label != rollouts[j].label) continue;
      double d = (step_mean_embedding(rollouts[i].steps.back()) -
                  step_mean_embedding(rollouts[j].steps.back()))
                     .norm();
      if (rollouts[i].label == 1) {
        fail_dist += d;
        ++n_fail;
      } else {
        succ_dist += d;
        ++n_succ;
      }
    }
  }
  CHECK(fail_dist / n_fail < succ_dist / n_succ);
}

TEST_CASE("per-task failure zones break the shared structure") {
  SynthConfig cfg = small_config(9);
  cfg.per_task_failure_zone = true;
  SynthResult sr = generate(cfg);
  CHECK(sr.meta.task_fail_centers.size() == 4);
  // terminal failures now concentrate per task, not globally
  double cross = 0;
  long n = 0;
  const auto& rollouts = sr.dataset.rollouts();
  for (std::size_t i = 0; i < rollouts.size(); ++i)
    for (std::size_t j = i + 1; j < rollouts.size(); ++j) {
      if (rollouts[i].label != 1 || rollouts[j].label != 1) continue;
      if (rollouts[i].task_id == rollouts[j].task_id) continue;
      cross += (step_mean_embedding(rollouts[i].steps.back()) -
                step_mean_embedding(rollouts[j].steps.back()))
                   .norm();
      ++n;
    }
  SynthResult shared = generate(small_config(9));
  double shared_cross = 0;
  long sn = 0;
  const auto& srl = shared.dataset.rollouts();
  for (std::size_t i = 0; i < srl.size(); ++i)
    for (std::size_t j = i + 1; j < srl.size(); ++j) {
      if (srl[i].label != 1 || srl[j].label != 1) continue;
      if (srl[i].task_id == srl[j].task_id) continue;
      shared_cross += (step_mean_embedding(srl[i].steps.back()) -
                       step_mean_embedding(srl[j].steps.back()))
                          .norm();
      ++sn;
    }
  CHECK(cross / n > shared_cross / sn);
}

TEST_CASE("zero separation is indistinguishable even for the oracle") {
  SynthConfig cfg;
  cfg.n_tasks = 5;
  cfg.n_unseen_tasks = 0;
  cfg.rollouts_per_task = 80;  // 400 rollouts
  cfg.fail_rate = 0.5;
  cfg.feat_dim = 16;
  cfg.rollout_len = 15;
  cfg.separation = 0.0;
  cfg.noise_sigma = 0.1;
  cfg.seed = 21;
  double auc = bayes_oracle_auc(generate(cfg));
  CHECK(auc > 0.45);
  CHECK(auc < 0.55);
}

TEST_CASE("wide separation is trivial for the oracle") {
  SynthConfig cfg = small_config(22);
  cfg.separation = 8.0;
  cfg.rollouts_per_task = 20;
  CHECK(bayes_oracle_auc(generate(cfg)) > 0.99);
}

TEST_CASE("optional channels are generated when enabled") {
  SynthConfig cfg = small_config(23);
  cfg.with_tokens = true;
  cfg.token_count = 5;
  cfg.with_action_samples = true;
  cfg.samples_per_step = 4;
  cfg.chunk_horizon = 6;
  cfg.replan_stride = 3;
  cfg.action_dim = 7;
  SynthResult sr = generate(cfg);
  const Rollout& r = sr.dataset.rollouts().front();
  CHECK(r.replan_stride == 3);
  for (const RolloutStep& s : r.steps) {
    REQUIRE(s.token_probs.has_value());
    CHECK(s.token_probs->size() == 5);
    for (double p : *s.token_probs) {
      CHECK(p > 0.0);
      CHECK(p <= 1.0);
    }
    REQUIRE(s.token_entropies.has_value());
    REQUIRE(s.action_chunk.has_value());
    CHECK(s.action_chunk->rows() == 6);
    CHECK(s.action_chunk->cols() == 7);
    REQUIRE(s.action_samples.has_value());
    CHECK(s.action_samples->size() == 4);
  }
}

TEST_CASE("flow layout emits horizon x diffusion tensors") {
  SynthConfig cfg = small_config(24);
  cfg.embedding_layout = "flow";
  cfg.flow_hori = 3;
  cfg.flow_diff = 2;
  SynthResult sr = generate(cfg);
  const EmbeddingTensor& e =
      sr.dataset.rollouts().front().steps.front().embedding;
  CHECK(e.layout == EmbeddingLayout::HoriDiffFeat);
  CHECK(e.hori == 3);
  CHECK(e.diff == 2);
  CHECK(e.data.size() == static_cast<std::size_t>(3 * 2 * cfg.feat_dim));
}

TEST_CASE("config validation and json round trip") {
  SynthConfig cfg = small_config(25);
  cfg.fail_rate = 1.5;
  CHECK_THROWS_AS(generate(cfg), Error);
  cfg = small_config(25);
  cfg.onset_lo = 0.8;
  cfg.onset_hi = 0.4;
  CHECK_THROWS_AS(cfg.validate(), Error);
  cfg = small_config(25);
  cfg.separation = 30.0;  // separation * sigma > 2
  CHECK_THROWS_AS(cfg.validate(), Error);

  SynthConfig base = small_config(26);
  base.with_tokens = true;
  SynthConfig parsed =
      synth_config_from_json_text(synth_config_to_json_text(base));
  CHECK(parsed.n_tasks == base.n_tasks);
  CHECK(parsed.seed == base.seed);
  CHECK(parsed.with_tokens == base.with_tokens);
  CHECK(parsed.onset_lo == base.onset_lo);

  CHECK_THROWS_AS(synth_config_from_json_text("{nope"), Error);
}

}  // TEST_SUITE
