// vigil CLI: synthetic data generation, detector training, scoring,
// conformal calibration, and evaluation over rollout datasets on disk.
// Talks to the library exclusively through the C API.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vigil/vigil.h"

namespace {

using nlohmann::json;

[[noreturn]] void die(vigil_status status, const std::string& context) {
  json err;
  err["error"] = vigil_status_name(status);
  err["message"] = vigil_last_error();
  if (!context.empty()) err["context"] = context;
  std::cerr << err.dump() << "\n";
  std::exit(static_cast<int>(status));
}

void check(vigil_status status, const std::string& context) {
  if (status != VIGIL_OK) die(status, context);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.good()) {
    json err;
    err["error"] = "io";
    err["message"] = "cannot open '" + path + "'";
    std::cerr << err.dump() << "\n";
    std::exit(static_cast<int>(VIGIL_ERR_IO));
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct DatasetHandle {
  vigil_dataset* ptr = nullptr;
  ~DatasetHandle() { vigil_dataset_free(ptr); }
};

struct ScorerHandle {
  vigil_scorer* ptr = nullptr;
  ~ScorerHandle() { vigil_scorer_free(ptr); }
};

struct ScoresHandle {
  vigil_scores* ptr = nullptr;
  ~ScoresHandle() { vigil_scores_free(ptr); }
};

struct SplitHandle {
  vigil_split* ptr = nullptr;
  ~SplitHandle() { vigil_split_free(ptr); }
};

// flags shared by the method-spec builders
struct MethodFlags {
  std::string method;
  std::string model_path;
  bool cumsum = false;
  std::string agg_token, agg_hori, agg_diff, variant;
  std::string metric;
  int k = 10;
  int pca_dim = 32;
  int clusters = 16;
  std::string subspace = "all";
  double delta = 0.1;
  double bandwidth = 1.0;
  int hidden = 256;
  double lr = 1e-3;
  double l2 = 1e-3;
  int epochs = 1000;
  int batch = 512;
  bool no_class_balance = false;
  std::string train_config_path;
};

struct SplitFlags {
  std::size_t unseen_tasks = 0;
  double train_frac = 0.6;
};

void add_method_options(CLI::App* cmd, MethodFlags& f, bool method_required) {
  auto* m = cmd->add_option("--method", f.method,
                            "score method (snake_case operation name)");
  if (method_required) m->required();
  cmd->add_flag("--cumsum", f.cumsum, "accumulate per-step scores over time");
  cmd->add_option("--agg-token", f.agg_token,
                  "token-axis aggregation: first|last|mean|first_and_last");
  cmd->add_option("--agg-hori", f.agg_hori, "horizon-axis aggregation");
  cmd->add_option("--agg-diff", f.agg_diff, "diffusion-axis aggregation");
  cmd->add_option("--variant", f.variant, "feature variant tag: encoded|pre_logits");
  cmd->add_option("--metric", f.metric,
                  "embedding distance: mahalanobis|euclid_knn|cosine_knn|pca_kmeans");
  cmd->add_option("--k", f.k, "kNN neighbor count");
  cmd->add_option("--pca-dim", f.pca_dim, "PCA-KMeans projection width");
  cmd->add_option("--clusters", f.clusters, "PCA-KMeans centroid count");
  cmd->add_option("--subspace", f.subspace,
                  "action subspace: all|translation|rotation|gripper");
  cmd->add_option("--delta", f.delta, "cluster_entropy distance threshold");
  cmd->add_option("--bandwidth", f.bandwidth, "STAC RBF kernel bandwidth");
  cmd->add_option("--hidden", f.hidden, "probe hidden width");
  cmd->add_option("--lr", f.lr, "learning rate");
  cmd->add_option("--l2", f.l2, "L2 regularization weight");
  cmd->add_option("--epochs", f.epochs, "training epochs");
  cmd->add_option("--batch", f.batch, "rollouts per training batch");
  cmd->add_flag("--no-class-balance", f.no_class_balance,
                "disable inverse-class-frequency loss weighting");
  cmd->add_option("--train-config", f.train_config_path,
                  "JSON file with TrainConfig fields (overrides flags)");
}

void add_split_options(CLI::App* cmd, SplitFlags& f) {
  cmd->add_option("--unseen-tasks", f.unseen_tasks,
                  "tasks held out entirely for eval-unseen");
  cmd->add_option("--train-frac", f.train_frac,
                  "fraction of each seen task used for training");
}

std::string build_spec_json(const MethodFlags& f, std::uint64_t seed) {
  json spec;
  spec["method"] = f.method;
  spec["cumsum"] = f.cumsum;
  json agg = json::object();
  if (!f.agg_token.empty()) agg["token"] = f.agg_token;
  if (!f.agg_hori.empty()) agg["hori"] = f.agg_hori;
  if (!f.agg_diff.empty()) agg["diff"] = f.agg_diff;
  if (!f.variant.empty()) agg["variant"] = f.variant;
  spec["agg"] = agg;
  if (!f.metric.empty()) spec["metric"] = f.metric;
  spec["k"] = f.k;
  spec["pca_dim"] = f.pca_dim;
  spec["clusters"] = f.clusters;
  spec["subspace"] = f.subspace;
  spec["delta"] = f.delta;
  spec["bandwidth"] = f.bandwidth;
  spec["hidden"] = f.hidden;
  json train;
  if (!f.train_config_path.empty()) {
    train = json::parse(read_file(f.train_config_path), nullptr, false);
    if (train.is_discarded()) {
      json err;
      err["error"] = "format";
      err["message"] = "bad train config '" + f.train_config_path + "'";
      std::cerr << err.dump() << "\n";
      std::exit(static_cast<int>(VIGIL_ERR_FORMAT));
    }
  } else {
    train["learning_rate"] = f.lr;
    train["l2_weight"] = f.l2;
    train["epochs"] = f.epochs;
    train["batch_rollouts"] = f.batch;
    train["class_balance"] = !f.no_class_balance;
  }
  if (!train.contains("seed")) train["seed"] = seed;
  spec["train"] = train;
  return spec.dump();
}

DatasetHandle load_data(const std::string& dir) {
  DatasetHandle ds;
  check(vigil_dataset_load(dir.c_str(), &ds.ptr), "loading dataset");
  return ds;
}

DatasetHandle select_split(const vigil_dataset* ds, const SplitFlags& split,
                           std::uint64_t seed, vigil_split_role role) {
  SplitHandle sp;
  check(vigil_split_create(ds, split.unseen_tasks, split.train_frac, seed,
                           &sp.ptr),
        "splitting dataset");
  const std::size_t n = vigil_split_count(sp.ptr, role);
  std::vector<const char*> ids(n);
  for (std::size_t i = 0; i < n; ++i)
    ids[i] = vigil_split_id(sp.ptr, role, i);
  DatasetHandle out;
  check(vigil_dataset_select(ds, ids.data(), n, &out.ptr),
        "selecting split rollouts");
  return out;
}

ScorerHandle make_scorer(const MethodFlags& f, const vigil_dataset* train,
                         std::uint64_t seed) {
  ScorerHandle scorer;
  if (!f.model_path.empty()) {
    check(vigil_scorer_load(f.model_path.c_str(), &scorer.ptr),
          "loading model");
  } else {
    check(vigil_scorer_fit(build_spec_json(f, seed).c_str(), train,
                           &scorer.ptr),
          "building scorer");
  }
  return scorer;
}

std::vector<double> parse_alphas(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vigil: failure detection for learned-policy rollouts"};
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "root seed for every stochastic step")
      ->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  std::string synth_config, synth_out, synth_meta;
  bool synth_seed_override = false;
  synth->add_option("--config", synth_config, "SynthConfig JSON file")->required();
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_option("--meta-out", synth_meta,
                    "write generator ground truth (onsets, centers) here");
  synth->add_flag("--override-seed", synth_seed_override,
                  "replace the config seed with --seed");

  // train
  auto* train_cmd = app.add_subcommand("train", "fit a detector on the train split");
  std::string train_data, train_out, train_detector;
  MethodFlags train_flags;
  SplitFlags train_split;
  train_cmd->add_option("--data", train_data, "dataset directory")->required();
  train_cmd->add_option("--detector", train_detector,
                        "method to train (mlp|lstm|rnd|mahalanobis|...)")
      ->required();
  train_cmd->add_option("--out", train_out, "model output path")->required();
  add_method_options(train_cmd, train_flags, false);
  add_split_options(train_cmd, train_split);

  // score
  auto* score_cmd = app.add_subcommand("score", "score every rollout in a dataset");
  std::string score_data, score_out;
  MethodFlags score_flags;
  score_cmd->add_option("--data", score_data, "dataset directory")->required();
  score_cmd->add_option("--out", score_out, "scores CSV path")->required();
  score_cmd->add_option("--model", score_flags.model_path,
                        "trained model (required for learned/bank methods)");
  add_method_options(score_cmd, score_flags, false);

  // calibrate
  auto* cal_cmd = app.add_subcommand(
      "calibrate", "fit a conformal band on eval-seen successes");
  std::string cal_data, cal_out;
  double cal_alpha = 0.1;
  MethodFlags cal_flags;
  SplitFlags cal_split;
  cal_cmd->add_option("--data", cal_data, "dataset directory")->required();
  cal_cmd->add_option("--out", cal_out, "band output path")->required();
  cal_cmd->add_option("--alpha", cal_alpha, "significance level")->required();
  cal_cmd->add_option("--model", cal_flags.model_path, "trained model path");
  add_method_options(cal_cmd, cal_flags, false);
  add_split_options(cal_cmd, cal_split);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "ROC + band metrics per eval split");
  std::string eval_data, eval_out;
  double eval_alpha = 0.0;
  bool eval_with_alpha = false;
  MethodFlags eval_flags;
  SplitFlags eval_split;
  eval_cmd->add_option("--data", eval_data, "dataset directory")->required();
  eval_cmd->add_option("--out", eval_out, "report CSV path")->required();
  auto* alpha_opt = eval_cmd->add_option(
      "--alpha", eval_alpha, "add band-based confusion metrics at this alpha");
  eval_cmd->add_option("--model", eval_flags.model_path, "trained model path");
  add_method_options(eval_cmd, eval_flags, true);
  add_split_options(eval_cmd, eval_split);

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "alpha sweep of the CP band");
  std::string sweep_data, sweep_out, sweep_alphas = "0.05,0.1,0.2";
  MethodFlags sweep_flags;
  SplitFlags sweep_split;
  sweep_cmd->add_option("--data", sweep_data, "dataset directory")->required();
  sweep_cmd->add_option("--out", sweep_out, "curve CSV path")->required();
  sweep_cmd->add_option("--alphas", sweep_alphas,
                        "comma-separated significance levels");
  sweep_cmd->add_option("--model", sweep_flags.model_path, "trained model path");
  add_method_options(sweep_cmd, sweep_flags, true);
  add_split_options(sweep_cmd, sweep_split);

  // grid
  auto* grid_cmd = app.add_subcommand("grid", "hyperparameter grid search");
  std::string grid_data, grid_out, grid_file, grid_method;
  SplitFlags grid_split;
  grid_cmd->add_option("--data", grid_data, "dataset directory")->required();
  grid_cmd->add_option("--method", grid_method, "method to search")->required();
  grid_cmd->add_option("--grid", grid_file,
                       "JSON file of {field: [values...]} axes");
  grid_cmd->add_option("--out", grid_out, "audit table CSV path")->required();
  add_split_options(grid_cmd, grid_split);

  // export-embeddings
  auto* exp_cmd = app.add_subcommand(
      "export-embeddings", "dump aggregated step embeddings for visualization");
  std::string exp_data, exp_out;
  std::string exp_token, exp_hori, exp_diff;
  exp_cmd->add_option("--data", exp_data, "dataset directory")->required();
  exp_cmd->add_option("--out", exp_out, "embeddings CSV path")->required();
  exp_cmd->add_option("--agg-token", exp_token, "token-axis aggregation");
  exp_cmd->add_option("--agg-hori", exp_hori, "horizon-axis aggregation");
  exp_cmd->add_option("--agg-diff", exp_diff, "diffusion-axis aggregation");

  // let global options (--seed) appear after the subcommand name
  for (CLI::App* sub : app.get_subcommands([](const CLI::App*) { return true; }))
    sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  if (synth->parsed()) {
    json cfg = json::parse(read_file(synth_config), nullptr, false);
    if (cfg.is_discarded()) {
      json err;
      err["error"] = "format";
      err["message"] = "bad synth config '" + synth_config + "'";
      std::cerr << err.dump() << "\n";
      return static_cast<int>(VIGIL_ERR_FORMAT);
    }
    if (synth_seed_override || !cfg.contains("seed")) cfg["seed"] = seed;
    DatasetHandle ds;
    char* meta = nullptr;
    check(vigil_dataset_generate(cfg.dump().c_str(), &ds.ptr,
                                 synth_meta.empty() ? nullptr : &meta),
          "generating dataset");
    check(vigil_dataset_save(ds.ptr, synth_out.c_str()), "saving dataset");
    if (meta) {
      std::ofstream out(synth_meta, std::ios::binary | std::ios::trunc);
      out << meta;
      vigil_string_free(meta);
    }
    std::cout << "wrote " << vigil_dataset_size(ds.ptr) << " rollouts ("
              << vigil_dataset_task_count(ds.ptr) << " tasks) to " << synth_out
              << "\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    train_flags.method = train_detector;
    DatasetHandle ds = load_data(train_data);
    DatasetHandle train_ds =
        select_split(ds.ptr, train_split, seed, VIGIL_SPLIT_TRAIN);
    ScorerHandle scorer;
    check(vigil_scorer_fit(build_spec_json(train_flags, seed).c_str(),
                           train_ds.ptr, &scorer.ptr),
          "training detector");
    check(vigil_scorer_save(scorer.ptr, train_out.c_str()), "saving model");
    std::cout << "trained " << train_detector << " on "
              << vigil_dataset_size(train_ds.ptr) << " rollouts -> "
              << train_out << "\n";
    return 0;
  }

  if (score_cmd->parsed()) {
    DatasetHandle ds = load_data(score_data);
    ScorerHandle scorer = make_scorer(score_flags, nullptr, seed);
    // a --cumsum flag on the command wraps the loaded model's scores too
    if (!score_flags.model_path.empty() && score_flags.cumsum) {
      json spec = json::parse(vigil_scorer_spec_json(scorer.ptr));
      if (!spec.value("cumsum", false)) {
        json err;
        err["error"] = "invalid_argument";
        err["message"] =
            "pass --cumsum at training time; the model file fixes it";
        std::cerr << err.dump() << "\n";
        return static_cast<int>(VIGIL_ERR_INVALID_ARGUMENT);
      }
    }
    ScoresHandle scores;
    check(vigil_scorer_score(scorer.ptr, ds.ptr, &scores.ptr), "scoring");
    check(vigil_scores_save_csv(scores.ptr, ds.ptr, score_out.c_str()),
          "writing scores");
    std::cout << "scored " << vigil_scores_count(scores.ptr)
              << " rollouts -> " << score_out << "\n";
    return 0;
  }

  if (cal_cmd->parsed()) {
    DatasetHandle ds = load_data(cal_data);
    ScorerHandle scorer;
    if (!cal_flags.model_path.empty()) {
      check(vigil_scorer_load(cal_flags.model_path.c_str(), &scorer.ptr),
            "loading model");
    } else if (!cal_flags.method.empty()) {
      check(vigil_scorer_fit(build_spec_json(cal_flags, seed).c_str(), nullptr,
                             &scorer.ptr),
            "building scorer");
    } else {
      json err;
      err["error"] = "invalid_argument";
      err["message"] = "calibrate needs --model or --method";
      std::cerr << err.dump() << "\n";
      return static_cast<int>(VIGIL_ERR_INVALID_ARGUMENT);
    }
    check(vigil_run_calibrate(ds.ptr, scorer.ptr, cal_split.unseen_tasks,
                              cal_split.train_frac, seed, cal_alpha,
                              cal_out.c_str()),
          "calibrating band");
    std::cout << "calibrated band (alpha=" << cal_alpha << ") -> " << cal_out
              << "\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    eval_with_alpha = alpha_opt->count() > 0;
    DatasetHandle ds = load_data(eval_data);
    char* summary = nullptr;
    check(vigil_run_eval(ds.ptr, build_spec_json(eval_flags, seed).c_str(),
                         eval_flags.model_path.empty()
                             ? nullptr
                             : eval_flags.model_path.c_str(),
                         eval_split.unseen_tasks, eval_split.train_frac, seed,
                         eval_with_alpha ? 1 : 0, eval_alpha,
                         eval_out.c_str(), &summary),
          "evaluating");
    json rows = json::parse(summary);
    vigil_string_free(summary);
    for (const auto& row : rows) {
      std::cout << row.at("split").get<std::string>()
                << " roc_auc=" << row.at("roc_auc").get<double>();
      if (row.contains("bal_acc"))
        std::cout << " bal_acc=" << row.at("bal_acc").get<double>()
                  << " t_det=" << row.at("t_det").get<double>();
      std::cout << " (n_pos=" << row.at("n_pos").get<std::size_t>()
                << ", n_neg=" << row.at("n_neg").get<std::size_t>() << ")\n";
    }
    std::cout << "report -> " << eval_out << "\n";
    return 0;
  }

  if (sweep_cmd->parsed()) {
    DatasetHandle ds = load_data(sweep_data);
    std::vector<double> alphas = parse_alphas(sweep_alphas);
    check(vigil_run_sweep(ds.ptr, build_spec_json(sweep_flags, seed).c_str(),
                          sweep_flags.model_path.empty()
                              ? nullptr
                              : sweep_flags.model_path.c_str(),
                          sweep_split.unseen_tasks, sweep_split.train_frac,
                          seed, alphas.data(), alphas.size(),
                          sweep_out.c_str()),
          "sweeping alpha");
    std::cout << alphas.size() << " curve points -> " << sweep_out << "\n";
    return 0;
  }

  if (grid_cmd->parsed()) {
    DatasetHandle ds = load_data(grid_data);
    std::string grid_json = grid_file.empty() ? "{}" : read_file(grid_file);
    char* best = nullptr;
    check(vigil_run_grid(ds.ptr, grid_method.c_str(), grid_json.c_str(),
                         grid_split.unseen_tasks, grid_split.train_frac, seed,
                         grid_out.c_str(), &best),
          "grid search");
    std::cout << "best: " << best << "\n";
    std::cout << "table -> " << grid_out << "\n";
    vigil_string_free(best);
    return 0;
  }

  if (exp_cmd->parsed()) {
    DatasetHandle ds = load_data(exp_data);
    json agg = json::object();
    if (!exp_token.empty()) agg["token"] = exp_token;
    if (!exp_hori.empty()) agg["hori"] = exp_hori;
    if (!exp_diff.empty()) agg["diff"] = exp_diff;
    std::string agg_text = agg.empty() ? "" : agg.dump();
    check(vigil_export_embeddings(
              ds.ptr, agg_text.empty() ? nullptr : agg_text.c_str(),
              exp_out.c_str()),
          "exporting embeddings");
    std::cout << "embeddings -> " << exp_out << "\n";
    return 0;
  }

  return 0;
}
