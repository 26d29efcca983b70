#include <doctest.h>

#include "helpers.hpp"
#include "vigil/error.hpp"
#include "vigil/io.hpp"
#include "vigil/methods.hpp"
#include "vigil/synth.hpp"

using namespace vigil;
using vigil::testing::TempDir;
using vigil::testing::make_rollout;

namespace {

// small labeled dataset with tokens + action samples + separable embeddings
Dataset labeled_dataset(std::uint64_t seed, int per_task = 8, int tasks = 2) {
  SynthConfig cfg;
  cfg.n_tasks = tasks;
  cfg.n_unseen_tasks = 0;
  cfg.rollouts_per_task = per_task;
  cfg.fail_rate = 0.5;
  cfg.feat_dim = 6;
  cfg.rollout_len = 10;
  cfg.separation = 6.0;
  cfg.noise_sigma = 0.1;
  cfg.with_tokens = true;
  cfg.token_count = 4;
  cfg.with_action_samples = true;
  cfg.samples_per_step = 3;
  cfg.chunk_horizon = 4;
  cfg.replan_stride = 2;
  cfg.action_dim = 7;
  cfg.seed = seed;
  return generate(cfg).dataset;
}

}  // namespace

TEST_SUITE("methods") {

TEST_CASE("canonical names and aliases") {
  CHECK(canonical_method("mlp") == "mlp_score_trace");
  CHECK(canonical_method("lstm") == "lstm_score_trace");
  CHECK(canonical_method("rnd") == "rnd_score");
  CHECK(canonical_method("stac") == "stac_score");
  CHECK(canonical_method("token_avg_entropy") == "token_avg_entropy");
  MethodSpec spec;
  CHECK(canonical_method("cosine_knn", &spec) == "embedding_distance_score");
  CHECK(spec.metric == "cosine_knn");
  try {
    canonical_method("does_not_exist");
    FAIL("expected unknown-method error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownMethod);
    CHECK(std::string(e.what()).find("mlp_score_trace") != std::string::npos);
  }
}

TEST_CASE("method spec json round trip") {
  MethodSpec spec;
  spec.method = "embedding_distance_score";
  spec.metric = "euclid_knn";
  spec.k = 7;
  spec.cumsum = true;
  spec.agg = AggregationSpec::token(AggMethod::Last);
  MethodSpec back = MethodSpec::from_json_text(spec.to_json_text());
  CHECK(back.method == spec.method);
  CHECK(back.metric == "euclid_knn");
  CHECK(back.k == 7);
  CHECK(back.cumsum);
  CHECK(back.agg.token_method == AggMethod::Last);
}

TEST_CASE("token scorer reports the missing field by name") {
  Dataset ds(std::vector<Rollout>{make_rollout("a", "t", 0, 3),
                                  make_rollout("b", "t", 1, 3)});
  MethodSpec spec;
  spec.method = "token_max_prob";
  auto scorer = fit_scorer(spec, nullptr);
  try {
    scorer->score(ds.rollouts().front());
    FAIL("expected an error about token_probs");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("token_probs") != std::string::npos);
    CHECK(std::string(e.what()).find("token_max_prob") != std::string::npos);
  }
}

TEST_CASE("cumsum flag accumulates raw scores") {
  Dataset ds = labeled_dataset(10);
  MethodSpec plain;
  plain.method = "token_avg_prob";
  MethodSpec summed = plain;
  summed.cumsum = true;
  auto s1 = fit_scorer(plain, nullptr);
  auto s2 = fit_scorer(summed, nullptr);
  const Rollout& r = ds.rollouts().front();
  std::vector<double> raw = s1->score(r).values;
  std::vector<double> cum = s2->score(r).values;
  CHECK(cum == accumulate(raw));
}

TEST_CASE("stateful methods demand a training split") {
  MethodSpec spec;
  spec.method = "mlp";
  CHECK_THROWS_AS(fit_scorer(spec, nullptr), Error);
  CHECK(method_needs_training("embedding_distance_score"));
  CHECK_FALSE(method_needs_training("stac_score"));
}

TEST_CASE("learned scorers round-trip through model files") {
  TempDir dir("methods_model");
  Dataset train = labeled_dataset(11);
  const Rollout& probe_rollout = train.rollouts().front();

  MethodSpec mlp;
  mlp.method = "mlp";
  mlp.hidden = 8;
  mlp.train.epochs = 5;
  mlp.train.seed = 3;
  auto scorer = fit_scorer(mlp, &train);
  save_scorer(*scorer, dir.str("mlp.json"));
  auto loaded = load_scorer(dir.str("mlp.json"));
  CHECK(loaded->score(probe_rollout).values ==
        scorer->score(probe_rollout).values);

  MethodSpec lstm;
  lstm.method = "lstm";
  lstm.hidden = 6;
  lstm.train.epochs = 2;
  auto ls = fit_scorer(lstm, &train);
  save_scorer(*ls, dir.str("lstm.json"));
  CHECK(load_scorer(dir.str("lstm.json"))->score(probe_rollout).values ==
        ls->score(probe_rollout).values);

  MethodSpec knn;
  knn.method = "euclid_knn";
  knn.k = 3;
  auto ks = fit_scorer(knn, &train);
  save_scorer(*ks, dir.str("knn.json"));
  CHECK(load_scorer(dir.str("knn.json"))->score(probe_rollout).values ==
        ks->score(probe_rollout).values);

  MethodSpec rnd;
  rnd.method = "rnd";
  rnd.hidden = 8;
  rnd.train.epochs = 2;
  auto rs = fit_scorer(rnd, &train);
  save_scorer(*rs, dir.str("rnd.json"));
  CHECK(load_scorer(dir.str("rnd.json"))->score(probe_rollout).values ==
        rs->score(probe_rollout).values);

  MethodSpec stateless;
  stateless.method = "token_max_prob";
  auto ss = fit_scorer(stateless, nullptr);
  save_scorer(*ss, dir.str("token.json"));
  CHECK(load_scorer(dir.str("token.json"))->score(probe_rollout).values ==
        ss->score(probe_rollout).values);

  CHECK_THROWS_AS(load_scorer(dir.str("nope.json")), Error);
}

TEST_CASE("pca-kmeans scorers rebuild deterministically from model files") {
  TempDir dir("methods_pca");
  Dataset train = labeled_dataset(12, 10);
  MethodSpec spec;
  spec.method = "pca_kmeans";
  spec.pca_dim = 3;
  spec.clusters = 4;
  spec.train.seed = 9;
  auto scorer = fit_scorer(spec, &train);
  save_scorer(*scorer, dir.str("pca.json"));
  const Rollout& r = train.rollouts().front();
  CHECK(load_scorer(dir.str("pca.json"))->score(r).values ==
        scorer->score(r).values);
}

TEST_CASE("mismatched embedding dims are reported") {
  Dataset train = labeled_dataset(13);
  MethodSpec spec;
  spec.method = "euclid_knn";
  auto scorer = fit_scorer(spec, &train);
  Rollout other = make_rollout("o", "t", 0, 3, 9);  // feat 9 != 6
  CHECK_THROWS_AS(scorer->score(other), Error);
}

TEST_CASE("roc computation truncates per task") {
  // task A rollouts of length 6/4, task B of length 4: the final max-so-far
  // must come from the per-task minimum prefix
  std::vector<Rollout> rollouts;
  auto spike_rollout = [&](const std::string& id, const std::string& task,
                           int label, int len, int spike_at) {
    Rollout r = make_rollout(id, task, label, len, 2, 1);
    for (auto& s : r.steps) {
      s.token_probs = std::vector<double>{0.9};
      s.token_entropies = std::vector<double>{0.0};
    }
    r.steps[static_cast<std::size_t>(spike_at)].token_probs =
        std::vector<double>{0.01};
    return r;
  };
  // failure spikes late (beyond the task minimum) -> truncated away
  rollouts.push_back(spike_rollout("a1", "A", 1, 6, 5));
  rollouts.push_back(spike_rollout("a2", "A", 0, 4, 1));
  rollouts.push_back(spike_rollout("b1", "B", 1, 4, 1));
  rollouts.push_back(spike_rollout("b2", "B", 0, 4, 3));
  Dataset ds(std::move(rollouts));
  MethodSpec spec;
  spec.method = "token_max_prob";
  auto scorer = fit_scorer(spec, nullptr);
  const double truncated = dataset_roc_auc(*scorer, ds, true);
  const double full = dataset_roc_auc(*scorer, ds, false);
  CHECK(truncated != full);  // the late spike only counts without truncation
}

TEST_CASE("grid search expands the product and keeps the first tie") {
  Dataset ds = labeled_dataset(14, 10);
  SplitAssignment split = split_dataset(ds, 0, 0.5, 1);
  Dataset train = subset(ds, split.train_ids);
  Dataset eval_seen = subset(ds, split.eval_seen_ids);

  GridResult one = grid_search(train, eval_seen, "token_max_prob", "{}");
  CHECK(one.table.size() == 1);
  CHECK(one.best_index == 0);

  GridResult tie = grid_search(train, eval_seen, "token_max_prob",
                               R"({"cumsum": [false, false]})");
  CHECK(tie.table.size() == 2);
  CHECK(tie.best_index == 0);

  GridResult grid = grid_search(
      train, eval_seen, "euclid_knn",
      R"({"k": [1, 3], "cumsum": [false, true], "agg_token": ["mean"]})");
  CHECK(grid.table.size() == 4);
  // first axis outermost: k=1 pairs first
  CHECK(grid.table[0].spec.k == 1);
  CHECK(grid.table[0].spec.cumsum == false);
  CHECK(grid.table[1].spec.k == 1);
  CHECK(grid.table[1].spec.cumsum == true);
  CHECK(grid.table[2].spec.k == 3);

  CHECK_THROWS_AS(
      grid_search(train, eval_seen, "euclid_knn", R"({"bogus": [1]})"), Error);
}

TEST_CASE("grid search picks the dominant configuration") {
  // token-layout embeddings: row 0 carries the class signal, the last row is
  // pure noise, so agg first must beat agg last
  Rng rng(15);
  std::vector<Rollout> rollouts;
  for (int task = 0; task < 2; ++task) {
    for (int i = 0; i < 12; ++i) {
      const int label = i % 2;
      Rollout r = make_rollout(
          "t" + std::to_string(task) + "_r" + std::to_string(i),
          "t" + std::to_string(task), label, 6, 3, 2,
          static_cast<std::uint64_t>(task * 100 + i));
      for (auto& s : r.steps) {
        for (int f = 0; f < 3; ++f) {
          s.embedding.data[static_cast<std::size_t>(f)] =
              (label ? 4.0 : -4.0) + 0.2 * rng.normal();       // informative
          s.embedding.data[static_cast<std::size_t>(3 + f)] = rng.normal();
        }
      }
      rollouts.push_back(std::move(r));
    }
  }
  Dataset ds(std::move(rollouts));
  SplitAssignment split = split_dataset(ds, 0, 0.5, 2);
  GridResult grid = grid_search(
      subset(ds, split.train_ids), subset(ds, split.eval_seen_ids),
      "euclid_knn", R"({"agg_token": ["first", "last"], "k": [1]})");
  REQUIRE(grid.table.size() == 2);
  CHECK(grid.table[grid.best_index].spec.agg.token_method == AggMethod::First);
  CHECK(grid.table[0].eval_seen_auc > grid.table[1].eval_seen_auc);
}

TEST_CASE("mlp grid of 3x3 yields nine audit rows") {
  Dataset ds = labeled_dataset(16, 6);
  SplitAssignment split = split_dataset(ds, 0, 0.5, 3);
  GridResult grid = grid_search(
      subset(ds, split.train_ids), subset(ds, split.eval_seen_ids), "mlp",
      R"({"learning_rate": [1e-4, 3e-4, 1e-3],
          "l2_weight": [1e-3, 1e-2, 1e-1],
          "epochs": [2], "hidden": [4]})");
  CHECK(grid.table.size() == 9);
}

}  // TEST_SUITE
