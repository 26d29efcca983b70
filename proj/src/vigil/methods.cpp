#include "vigil/methods.hpp"

#include <algorithm>
#include <map>

#include <json.hpp>

#include "vigil/error.hpp"
#include "vigil/eval.hpp"
#include "vigil/io.hpp"

namespace vigil {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

// ---- MethodSpec JSON ----

namespace {

json agg_to_json(const AggregationSpec& agg) {
  json j = json::object();
  if (agg.token_method) j["token"] = agg_method_name(*agg.token_method);
  if (agg.hori_method) j["hori"] = agg_method_name(*agg.hori_method);
  if (agg.diff_method) j["diff"] = agg_method_name(*agg.diff_method);
  if (agg.variant == FeatureVariant::Encoded) j["variant"] = "encoded";
  if (agg.variant == FeatureVariant::PreLogits) j["variant"] = "pre_logits";
  return j;
}

AggregationSpec agg_from_json(const json& j) {
  AggregationSpec agg;
  if (j.contains("token"))
    agg.token_method = agg_method_from_string(j.at("token").get<std::string>());
  if (j.contains("hori"))
    agg.hori_method = agg_method_from_string(j.at("hori").get<std::string>());
  if (j.contains("diff"))
    agg.diff_method = agg_method_from_string(j.at("diff").get<std::string>());
  if (j.contains("variant")) {
    const std::string v = j.at("variant").get<std::string>();
    if (v == "encoded")
      agg.variant = FeatureVariant::Encoded;
    else if (v == "pre_logits")
      agg.variant = FeatureVariant::PreLogits;
    else
      fail(ErrorCode::InvalidArgument,
           "unknown feature variant '" + v + "' (expected encoded|pre_logits)");
  }
  require(!(agg.token_method && (agg.hori_method || agg.diff_method)),
          ErrorCode::InvalidArgument,
          "aggregation spec mixes token and horizon/diffusion methods");
  require(agg.hori_method.has_value() == agg.diff_method.has_value(),
          ErrorCode::InvalidArgument,
          "horizon/diffusion aggregation needs both hori and diff");
  return agg;
}

json train_to_json(const TrainConfig& c) {
  json j;
  j["learning_rate"] = c.learning_rate;
  j["l2_weight"] = c.l2_weight;
  j["epochs"] = c.epochs;
  j["batch_rollouts"] = c.batch_rollouts;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["adam_eps"] = c.adam_eps;
  j["seed"] = c.seed;
  j["class_balance"] = c.class_balance;
  return j;
}

TrainConfig train_from_json(const json& j) {
  TrainConfig c;
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("l2_weight")) c.l2_weight = j.at("l2_weight").get<double>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_rollouts")) c.batch_rollouts = j.at("batch_rollouts").get<int>();
  if (j.contains("beta1")) c.beta1 = j.at("beta1").get<double>();
  if (j.contains("beta2")) c.beta2 = j.at("beta2").get<double>();
  if (j.contains("adam_eps")) c.adam_eps = j.at("adam_eps").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("class_balance")) c.class_balance = j.at("class_balance").get<bool>();
  c.validate();
  return c;
}

}  // namespace

AggregationSpec aggregation_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad aggregation spec: ") + e.what());
  }
  try {
    return agg_from_json(j);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format,
         std::string("bad aggregation spec field: ") + e.what());
  }
}

const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names = {
      "token_max_prob",    "token_avg_prob",  "token_max_entropy",
      "token_avg_entropy", "embedding_distance_score", "total_variation",
      "cluster_entropy",   "stac_score",      "stac_single_score",
      "mlp_score_trace",   "lstm_score_trace", "rnd_score"};
  return names;
}

std::string canonical_method(const std::string& name, MethodSpec* spec) {
  static const std::map<std::string, std::string> aliases = {
      {"mlp", "mlp_score_trace"},
      {"lstm", "lstm_score_trace"},
      {"rnd", "rnd_score"},
      {"stac", "stac_score"},
      {"stac_single", "stac_single_score"},
  };
  static const std::vector<std::string> metric_aliases = {
      "mahalanobis", "euclid_knn", "cosine_knn", "pca_kmeans"};

  if (std::find(method_names().begin(), method_names().end(), name) !=
      method_names().end())
    return name;
  auto it = aliases.find(name);
  if (it != aliases.end()) return it->second;
  if (std::find(metric_aliases.begin(), metric_aliases.end(), name) !=
      metric_aliases.end()) {
    if (spec) spec->metric = name;
    return "embedding_distance_score";
  }
  std::string known;
  for (const std::string& n : method_names()) known += " " + n;
  fail(ErrorCode::UnknownMethod,
       "unknown method '" + name + "'; known methods:" + known);
}

bool method_needs_training(const std::string& canonical) {
  return canonical == "embedding_distance_score" ||
         canonical == "mlp_score_trace" || canonical == "lstm_score_trace" ||
         canonical == "rnd_score";
}

MethodSpec MethodSpec::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad method spec: ") + e.what());
  }
  MethodSpec s;
  try {
    s.method = j.at("method").get<std::string>();
    s.method = canonical_method(s.method, &s);
    if (j.contains("cumsum")) s.cumsum = j.at("cumsum").get<bool>();
    if (j.contains("agg")) s.agg = agg_from_json(j.at("agg"));
    if (j.contains("metric")) s.metric = j.at("metric").get<std::string>();
    if (j.contains("k")) s.k = j.at("k").get<int>();
    if (j.contains("pca_dim")) s.pca_dim = j.at("pca_dim").get<int>();
    if (j.contains("clusters")) s.clusters = j.at("clusters").get<int>();
    if (j.contains("subspace")) s.subspace = j.at("subspace").get<std::string>();
    if (j.contains("delta")) s.cluster_delta = j.at("delta").get<double>();
    if (j.contains("bandwidth")) s.bandwidth = j.at("bandwidth").get<double>();
    if (j.contains("hidden")) s.hidden = j.at("hidden").get<int>();
    if (j.contains("train")) s.train = train_from_json(j.at("train"));
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad method spec field: ") + e.what());
  }
  return s;
}

std::string MethodSpec::to_json_text() const {
  json j;
  j["method"] = method;
  j["cumsum"] = cumsum;
  j["agg"] = agg_to_json(agg);
  if (method == "embedding_distance_score") {
    j["metric"] = metric;
    j["k"] = k;
    j["pca_dim"] = pca_dim;
    j["clusters"] = clusters;
  }
  if (method == "total_variation") j["subspace"] = subspace;
  if (method == "cluster_entropy") j["delta"] = cluster_delta;
  if (method == "stac_score" || method == "stac_single_score")
    j["bandwidth"] = bandwidth;
  if (method_needs_training(method)) {
    j["train"] = train_to_json(train);
    j["hidden"] = hidden;
  }
  return j.dump();
}

// ---- scorers ----

ScoreTrace Scorer::score(const Rollout& r) const {
  ScoreTrace trace;
  trace.rollout_id = r.rollout_id;
  trace.method_tag = spec_.method == "embedding_distance_score"
                         ? spec_.method + "/" + spec_.metric
                         : spec_.method;
  trace.values = raw_scores(r);
  require(trace.values.size() == r.steps.size(), ErrorCode::Internal,
          "score trace length mismatch");
  for (double v : trace.values)
    require(std::isfinite(v), ErrorCode::Numeric,
            "non-finite score for rollout '" + r.rollout_id + "'");
  if (spec_.cumsum) trace.values = accumulate(trace.values);
  return trace;
}

std::string Scorer::state_json_text() const { return "{}"; }

namespace {

// resolve the aggregation spec against the data's actual layout
AggregationSpec resolve_agg(const AggregationSpec& spec, const Dataset& ds) {
  require(ds.size() > 0, ErrorCode::InvalidArgument, "empty dataset");
  const EmbeddingTensor& emb = ds.rollouts().front().steps.front().embedding;
  require(!emb.empty(), ErrorCode::InvalidArgument,
          "dataset has no embeddings (required by this method)");
  AggregationSpec out = spec;
  if (!out.token_method && !out.hori_method)
    out = [&] {
      AggregationSpec d = AggregationSpec::defaults_for(emb.layout);
      d.variant = spec.variant;
      return d;
    }();
  if (emb.layout == EmbeddingLayout::TokenFeat)
    require(out.token_method.has_value(), ErrorCode::InvalidArgument,
            "dataset has token-layout features but the aggregation spec has "
            "no token method");
  if (emb.layout == EmbeddingLayout::HoriDiffFeat)
    require(out.hori_method.has_value(), ErrorCode::InvalidArgument,
            "dataset has horizon/diffusion-layout features but the "
            "aggregation spec has no hori/diff methods");
  return out;
}

struct ClassEmbeddings {
  Eigen::MatrixXd succ;
  Eigen::MatrixXd fail;
};

ClassEmbeddings gather_class_embeddings(const Dataset& ds,
                                        const AggregationSpec& agg) {
  std::vector<Eigen::MatrixXd> succ_rows, fail_rows;
  long n_succ = 0, n_fail = 0;
  int dim = -1;
  for (const Rollout& r : ds.rollouts()) {
    Eigen::MatrixXd e = rollout_embeddings(r, agg);
    if (dim < 0) dim = static_cast<int>(e.cols());
    require(static_cast<int>(e.cols()) == dim, ErrorCode::Dimension,
            "aggregated embedding dims differ across rollouts");
    (r.label == 1 ? n_fail : n_succ) += e.rows();
    (r.label == 1 ? fail_rows : succ_rows).push_back(std::move(e));
  }
  require(n_succ > 0 && n_fail > 0, ErrorCode::SingleClass,
          "training split must contain both successful and failed rollouts");
  ClassEmbeddings out;
  out.succ.resize(n_succ, dim);
  out.fail.resize(n_fail, dim);
  long rs = 0, rf = 0;
  for (const auto& m : succ_rows) {
    out.succ.middleRows(rs, m.rows()) = m;
    rs += m.rows();
  }
  for (const auto& m : fail_rows) {
    out.fail.middleRows(rf, m.rows()) = m;
    rf += m.rows();
  }
  return out;
}

TraceBatch gather_batch(const Dataset& ds, const AggregationSpec& agg) {
  TraceBatch batch;
  batch.reserve(ds.size());
  for (const Rollout& r : ds.rollouts())
    batch.push_back({rollout_embeddings(r, agg), r.label});
  return batch;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (long r = 0; r < m.rows(); ++r)
    for (long c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  j["data"] = data;
  return j;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const long rows = j.at("rows").get<long>();
  const long cols = j.at("cols").get<long>();
  const auto data = j.at("data").get<std::vector<double>>();
  require(data.size() == static_cast<std::size_t>(rows * cols),
          ErrorCode::Format, "matrix data length mismatch");
  Eigen::MatrixXd m(rows, cols);
  for (long r = 0; r < rows; ++r)
    for (long c = 0; c < cols; ++c)
      m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  return m;
}

Eigen::VectorXd vector_from_json(const json& j) {
  const auto data = j.at("data").get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(),
                                           static_cast<long>(data.size()));
}

json vector_to_json(const Eigen::VectorXd& v) {
  json j;
  j["data"] = std::vector<double>(v.data(), v.data() + v.size());
  return j;
}

// ---- concrete scorers ----

class TokenScorer : public Scorer {
 public:
  using Scorer::Scorer;

 protected:
  std::vector<double> raw_scores(const Rollout& r) const override {
    const bool wants_probs = spec_.method == "token_max_prob" ||
                             spec_.method == "token_avg_prob";
    std::vector<double> out;
    out.reserve(r.steps.size());
    for (std::size_t t = 0; t < r.steps.size(); ++t) {
      const RolloutStep& s = r.steps[t];
      if (wants_probs) {
        require(s.token_probs.has_value(), ErrorCode::InvalidArgument,
                "rollout '" + r.rollout_id + "' has no token_probs (required by " +
                    spec_.method + ")");
        out.push_back(spec_.method == "token_max_prob"
                          ? token_max_prob(*s.token_probs)
                          : token_avg_prob(*s.token_probs));
      } else {
        require(s.token_entropies.has_value(), ErrorCode::InvalidArgument,
                "rollout '" + r.rollout_id +
                    "' has no token_entropies (required by " + spec_.method + ")");
        out.push_back(spec_.method == "token_max_entropy"
                          ? token_max_entropy(*s.token_entropies)
                          : token_avg_entropy(*s.token_entropies));
      }
    }
    return out;
  }
};

class TotalVariationScorer : public Scorer {
 public:
  using Scorer::Scorer;

 protected:
  std::vector<double> raw_scores(const Rollout& r) const override {
    std::vector<double> out;
    out.reserve(r.steps.size());
    for (const RolloutStep& s : r.steps) {
      require(s.action_samples.has_value() && s.action_samples->size() >= 2,
              ErrorCode::InvalidArgument,
              "rollout '" + r.rollout_id +
                  "' needs >= 2 action_samples per step (required by "
                  "total_variation)");
      const int a = static_cast<int>(s.action_samples->front().cols());
      out.push_back(total_variation(flatten_chunk_samples(*s.action_samples),
                                    ActionSubspace::named(spec_.subspace, a), a));
    }
    return out;
  }
};

class ClusterEntropyScorer : public Scorer {
 public:
  using Scorer::Scorer;

 protected:
  std::vector<double> raw_scores(const Rollout& r) const override {
    std::vector<double> out;
    out.reserve(r.steps.size());
    for (const RolloutStep& s : r.steps) {
      require(s.action_samples.has_value(), ErrorCode::InvalidArgument,
              "rollout '" + r.rollout_id +
                  "' has no action_samples (required by cluster_entropy)");
      out.push_back(cluster_entropy(flatten_chunk_samples(*s.action_samples),
                                    spec_.cluster_delta));
    }
    return out;
  }
};

class StacScorer : public Scorer {
 public:
  using Scorer::Scorer;

 protected:
  std::vector<double> raw_scores(const Rollout& r) const override {
    std::vector<double> out(r.steps.size(), 0.0);
    for (std::size_t t = 1; t < r.steps.size(); ++t) {
      const RolloutStep& prev = r.steps[t - 1];
      const RolloutStep& curr = r.steps[t];
      require(prev.action_samples.has_value() && curr.action_samples.has_value(),
              ErrorCode::InvalidArgument,
              "rollout '" + r.rollout_id +
                  "' has no action_samples (required by stac_score)");
      out[t] = stac_score(*prev.action_samples, *curr.action_samples,
                          r.replan_stride, spec_.bandwidth);
    }
    return out;
  }
};

class StacSingleScorer : public Scorer {
 public:
  using Scorer::Scorer;

 protected:
  std::vector<double> raw_scores(const Rollout& r) const override {
    std::vector<double> out(r.steps.size(), 0.0);
    for (std::size_t t = 1; t < r.steps.size(); ++t) {
      const RolloutStep& prev = r.steps[t - 1];
      const RolloutStep& curr = r.steps[t];
      require(prev.action_chunk.has_value() && curr.action_chunk.has_value(),
              ErrorCode::InvalidArgument,
              "rollout '" + r.rollout_id +
                  "' has no action_chunk (required by stac_single_score)");
      out[t] = stac_single_score(*prev.action_chunk, *curr.action_chunk,
                                 r.replan_stride, spec_.bandwidth);
    }
    return out;
  }
};

class DistanceScorer : public Scorer {
 public:
  DistanceScorer(MethodSpec spec, ReferenceBank bank, DistanceMetric metric)
      : Scorer(std::move(spec)), bank_(std::move(bank)), metric_(metric) {}

  std::string state_json_text() const override {
    json j;
    j["succ"] = matrix_to_json(bank_.succ().points);
    j["fail"] = matrix_to_json(bank_.fail().points);
    return j.dump();
  }

 protected:
  std::vector<double> raw_scores(const Rollout& r) const override {
    Eigen::MatrixXd emb = rollout_embeddings(r, spec_.agg);
    require(static_cast<int>(emb.cols()) == bank_.dim(), ErrorCode::Dimension,
            "rollout '" + r.rollout_id + "' aggregated dim " +
                std::to_string(emb.cols()) + " does not match the model dim " +
                std::to_string(bank_.dim()));
    std::vector<double> out(static_cast<std::size_t>(emb.rows()));
    for (long t = 0; t < emb.rows(); ++t)
      out[static_cast<std::size_t>(t)] =
          embedding_distance_score(emb.row(t).transpose(), bank_, metric_);
    return out;
  }

 private:
  ReferenceBank bank_;
  DistanceMetric metric_;
};

class MlpScorer : public Scorer {
 public:
  MlpScorer(MethodSpec spec, MlpProbe probe)
      : Scorer(std::move(spec)), probe_(std::move(probe)) {}

  std::string state_json_text() const override {
    json j;
    j["w1"] = matrix_to_json(probe_.w1);
    j["b1"] = vector_to_json(probe_.b1);
    j["w2"] = matrix_to_json(probe_.w2);
    j["b2"] = probe_.b2;
    return j.dump();
  }

  const MlpProbe& probe() const { return probe_; }

 protected:
  std::vector<double> raw_scores(const Rollout& r) const override {
    return probe_.score_trace(rollout_embeddings(r, spec_.agg));
  }

 private:
  MlpProbe probe_;
};

class LstmScorer : public Scorer {
 public:
  LstmScorer(MethodSpec spec, LstmProbe probe)
      : Scorer(std::move(spec)), probe_(std::move(probe)) {}

  std::string state_json_text() const override {
    json j;
    j["wx"] = matrix_to_json(probe_.wx);
    j["wh"] = matrix_to_json(probe_.wh);
    j["b"] = vector_to_json(probe_.b);
    j["wy"] = matrix_to_json(probe_.wy);
    j["by"] = probe_.by;
    return j.dump();
  }

  const LstmProbe& probe() const { return probe_; }

 protected:
  std::vector<double> raw_scores(const Rollout& r) const override {
    return probe_.score_trace(rollout_embeddings(r, spec_.agg));
  }

 private:
  LstmProbe probe_;
};

class RndScorer : public Scorer {
 public:
  RndScorer(MethodSpec spec, RndPair pair)
      : Scorer(std::move(spec)), pair_(std::move(pair)) {}

  std::string state_json_text() const override {
    auto net_json = [](const RndNet& n) {
      json j;
      j["w1"] = matrix_to_json(n.w1);
      j["b1"] = vector_to_json(n.b1);
      j["w2"] = matrix_to_json(n.w2);
      j["b2"] = vector_to_json(n.b2);
      return j;
    };
    json j;
    j["succ_target"] = net_json(pair_.succ.target);
    j["succ_predictor"] = net_json(pair_.succ.predictor);
    j["fail_target"] = net_json(pair_.fail.target);
    j["fail_predictor"] = net_json(pair_.fail.predictor);
    return j.dump();
  }

 protected:
  std::vector<double> raw_scores(const Rollout& r) const override {
    Eigen::MatrixXd emb = rollout_embeddings(r, spec_.agg);
    std::vector<double> out(static_cast<std::size_t>(emb.rows()));
    for (long t = 0; t < emb.rows(); ++t)
      out[static_cast<std::size_t>(t)] = pair_.score(emb.row(t).transpose());
    return out;
  }

 private:
  RndPair pair_;
};

DistanceMetric metric_from_spec(const MethodSpec& spec) {
  DistanceMetric m;
  m.k = spec.k;
  m.pca_dim = spec.pca_dim;
  m.clusters = spec.clusters;
  if (spec.metric == "mahalanobis")
    m.kind = DistanceMetricKind::Mahalanobis;
  else if (spec.metric == "euclid_knn")
    m.kind = DistanceMetricKind::EuclidKnn;
  else if (spec.metric == "cosine_knn")
    m.kind = DistanceMetricKind::CosineKnn;
  else if (spec.metric == "pca_kmeans")
    m.kind = DistanceMetricKind::PcaKmeans;
  else
    fail(ErrorCode::UnknownMethod,
         "unknown distance metric '" + spec.metric +
             "' (expected mahalanobis|euclid_knn|cosine_knn|pca_kmeans)");
  return m;
}

ReferenceBank bank_from_embeddings(const MethodSpec& spec, Eigen::MatrixXd succ,
                                   Eigen::MatrixXd fail) {
  ReferenceBank::Options opts;
  opts.with_pca_kmeans = spec.metric == "pca_kmeans";
  opts.pca_dim = std::min<int>(spec.pca_dim, static_cast<int>(succ.cols()));
  opts.clusters = spec.clusters;
  opts.seed = spec.train.seed;
  return ReferenceBank(std::move(succ), std::move(fail), opts);
}

}  // namespace

std::unique_ptr<Scorer> fit_scorer(const MethodSpec& raw_spec,
                                   const Dataset* train) {
  MethodSpec spec = raw_spec;
  spec.method = canonical_method(spec.method, &spec);
  const std::string& m = spec.method;

  if (m == "token_max_prob" || m == "token_avg_prob" ||
      m == "token_max_entropy" || m == "token_avg_entropy")
    return std::make_unique<TokenScorer>(spec);
  if (m == "total_variation") return std::make_unique<TotalVariationScorer>(spec);
  if (m == "cluster_entropy") return std::make_unique<ClusterEntropyScorer>(spec);
  if (m == "stac_score") return std::make_unique<StacScorer>(spec);
  if (m == "stac_single_score") return std::make_unique<StacSingleScorer>(spec);

  require(train != nullptr && train->size() > 0, ErrorCode::InvalidArgument,
          "method '" + m + "' needs a training split");
  spec.agg = resolve_agg(spec.agg, *train);

  if (m == "embedding_distance_score") {
    ClassEmbeddings ce = gather_class_embeddings(*train, spec.agg);
    DistanceMetric metric = metric_from_spec(spec);
    const bool is_knn = metric.kind == DistanceMetricKind::EuclidKnn ||
                        metric.kind == DistanceMetricKind::CosineKnn;
    require(!is_knn ||
                (metric.k <= ce.succ.rows() && metric.k <= ce.fail.rows()),
            ErrorCode::InvalidArgument, "k exceeds the reference bank size");
    return std::make_unique<DistanceScorer>(
        spec, bank_from_embeddings(spec, std::move(ce.succ), std::move(ce.fail)),
        metric);
  }
  if (m == "rnd_score") {
    ClassEmbeddings ce = gather_class_embeddings(*train, spec.agg);
    return std::make_unique<RndScorer>(
        spec, rnd_fit(ce.succ, ce.fail, spec.train, spec.hidden, 128));
  }
  if (m == "mlp_score_trace") {
    TrainResult res =
        train_probe(gather_batch(*train, spec.agg), ProbeKind::Mlp, spec.train,
                    spec.hidden);
    return std::make_unique<MlpScorer>(spec, std::get<MlpProbe>(res.probe));
  }
  if (m == "lstm_score_trace") {
    TrainResult res =
        train_probe(gather_batch(*train, spec.agg), ProbeKind::Lstm, spec.train,
                    spec.hidden);
    return std::make_unique<LstmScorer>(spec, std::get<LstmProbe>(res.probe));
  }
  fail(ErrorCode::UnknownMethod, "unknown method '" + m + "'");
}

void save_scorer(const Scorer& scorer, const std::string& path) {
  json j;
  j["format"] = "vigil-model";
  j["version"] = 1;
  j["spec"] = json::parse(scorer.spec().to_json_text());
  j["state"] = json::parse(scorer.state_json_text());
  write_text_file(path, j.dump(2) + "\n");
}

std::unique_ptr<Scorer> load_scorer(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad model file: ") + e.what());
  }
  try {
    require(j.at("format").get<std::string>() == "vigil-model",
            ErrorCode::Format, "'" + path + "' is not a model file");
    MethodSpec spec = MethodSpec::from_json_text(j.at("spec").dump());
    const json& state = j.at("state");
    const std::string& m = spec.method;

    if (m == "embedding_distance_score") {
      Eigen::MatrixXd succ = matrix_from_json(state.at("succ"));
      Eigen::MatrixXd fail_m = matrix_from_json(state.at("fail"));
      DistanceMetric metric = metric_from_spec(spec);
      return std::make_unique<DistanceScorer>(
          spec, bank_from_embeddings(spec, std::move(succ), std::move(fail_m)),
          metric);
    }
    if (m == "mlp_score_trace") {
      MlpProbe p;
      p.w1 = matrix_from_json(state.at("w1"));
      p.b1 = vector_from_json(state.at("b1"));
      p.w2 = matrix_from_json(state.at("w2"));
      p.b2 = state.at("b2").get<double>();
      return std::make_unique<MlpScorer>(spec, std::move(p));
    }
    if (m == "lstm_score_trace") {
      LstmProbe p;
      p.wx = matrix_from_json(state.at("wx"));
      p.wh = matrix_from_json(state.at("wh"));
      p.b = vector_from_json(state.at("b"));
      p.wy = matrix_from_json(state.at("wy"));
      p.by = state.at("by").get<double>();
      return std::make_unique<LstmScorer>(spec, std::move(p));
    }
    if (m == "rnd_score") {
      auto net_from = [](const json& nj) {
        RndNet n;
        n.w1 = matrix_from_json(nj.at("w1"));
        n.b1 = vector_from_json(nj.at("b1"));
        n.w2 = matrix_from_json(nj.at("w2"));
        n.b2 = vector_from_json(nj.at("b2"));
        return n;
      };
      RndPair pair;
      pair.succ.target = net_from(state.at("succ_target"));
      pair.succ.predictor = net_from(state.at("succ_predictor"));
      pair.fail.target = net_from(state.at("fail_target"));
      pair.fail.predictor = net_from(state.at("fail_predictor"));
      return std::make_unique<RndScorer>(spec, std::move(pair));
    }
    // stateless methods: rebuild from the spec alone
    return fit_scorer(spec, nullptr);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad model field: ") + e.what());
  }
}

std::vector<ScoreTrace> score_dataset(const Scorer& scorer, const Dataset& ds) {
  std::vector<ScoreTrace> out;
  out.reserve(ds.size());
  for (const Rollout& r : ds.rollouts()) out.push_back(scorer.score(r));
  return out;
}

double dataset_roc_auc(const Scorer& scorer, const Dataset& ds,
                       bool truncate_per_task) {
  std::map<std::string, std::size_t> min_len;
  if (truncate_per_task) {
    for (const auto& [task, idx] : ds.task_index()) {
      std::size_t m = ds.rollouts()[idx.front()].length();
      for (std::size_t i : idx) m = std::min(m, ds.rollouts()[i].length());
      min_len[task] = m;
    }
  }
  std::vector<double> finals;
  std::vector<int> labels;
  for (const Rollout& r : ds.rollouts()) {
    ScoreTrace tr = scorer.score(r);
    std::size_t cut = truncate_per_task ? min_len.at(r.task_id)
                                        : tr.values.size();
    tr.values.resize(cut);
    finals.push_back(max_so_far(tr.values).back());
    labels.push_back(r.label);
  }
  return roc_auc(finals, labels);
}

GridResult grid_search(const Dataset& train, const Dataset& eval_seen,
                       const std::string& method, const std::string& grid_json_text) {
  ordered_json grid;
  try {
    grid = ordered_json::parse(grid_json_text.empty() ? "{}" : grid_json_text);
  } catch (const json::exception& e) {
    fail(ErrorCode::Format, std::string("bad grid file: ") + e.what());
  }
  require(grid.is_object(), ErrorCode::Format,
          "grid must be a JSON object of {field: [values...]}");

  MethodSpec base;
  base.method = method;
  base.method = canonical_method(base.method, &base);

  std::vector<std::string> keys;
  std::vector<std::vector<ordered_json>> values;
  for (const auto& [key, vals] : grid.items()) {
    require(vals.is_array() && !vals.empty(), ErrorCode::Format,
            "grid axis '" + key + "' must be a nonempty array");
    keys.push_back(key);
    values.emplace_back(vals.begin(), vals.end());
  }

  // cartesian product, first listed axis outermost
  std::vector<MethodSpec> specs;
  std::vector<std::size_t> at(keys.size(), 0);
  auto apply = [&](MethodSpec& s) {
    for (std::size_t i = 0; i < keys.size(); ++i) {
      const std::string& key = keys[i];
      const ordered_json& v = values[i][at[i]];
      if (key == "cumsum") s.cumsum = v.get<bool>();
      else if (key == "agg_token")
        s.agg.token_method = agg_method_from_string(v.get<std::string>());
      else if (key == "agg_hori")
        s.agg.hori_method = agg_method_from_string(v.get<std::string>());
      else if (key == "agg_diff")
        s.agg.diff_method = agg_method_from_string(v.get<std::string>());
      else if (key == "metric") s.metric = v.get<std::string>();
      else if (key == "k") s.k = v.get<int>();
      else if (key == "pca_dim") s.pca_dim = v.get<int>();
      else if (key == "clusters") s.clusters = v.get<int>();
      else if (key == "subspace") s.subspace = v.get<std::string>();
      else if (key == "delta") s.cluster_delta = v.get<double>();
      else if (key == "bandwidth") s.bandwidth = v.get<double>();
      else if (key == "hidden") s.hidden = v.get<int>();
      else if (key == "learning_rate") s.train.learning_rate = v.get<double>();
      else if (key == "l2_weight") s.train.l2_weight = v.get<double>();
      else if (key == "epochs") s.train.epochs = v.get<int>();
      else if (key == "batch_rollouts") s.train.batch_rollouts = v.get<int>();
      else if (key == "seed") s.train.seed = v.get<std::uint64_t>();
      else if (key == "class_balance") s.train.class_balance = v.get<bool>();
      else
        fail(ErrorCode::Format, "unknown grid axis '" + key + "'");
    }
  };
  while (true) {
    MethodSpec s = base;
    apply(s);
    specs.push_back(std::move(s));
    // odometer increment, last axis fastest
    std::size_t i = keys.size();
    while (i > 0) {
      --i;
      if (++at[i] < values[i].size()) break;
      at[i] = 0;
      if (i == 0) {
        i = keys.size() + 1;  // done
        break;
      }
    }
    if (keys.empty() || i == keys.size() + 1) break;
  }

  GridResult result;
  const bool needs_train = method_needs_training(base.method);
  double best = -1.0;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    std::unique_ptr<Scorer> scorer =
        fit_scorer(specs[i], needs_train ? &train : nullptr);
    const double auc = dataset_roc_auc(*scorer, eval_seen, true);
    result.table.push_back({specs[i], auc});
    if (auc > best) {
      best = auc;
      result.best_index = i;
    }
  }
  return result;
}

}  // namespace vigil
