#ifndef VIGIL_PROBES_HPP
#define VIGIL_PROBES_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace vigil {

// One training example: aggregated embeddings (row per step) + label.
struct TraceExample {
  Eigen::MatrixXd emb;  // T x d
  int label = 0;
};
using TraceBatch = std::vector<TraceExample>;
using TraceBatchRefs = std::vector<const TraceExample*>;

struct TrainConfig {
  double learning_rate = 1e-3;
  double l2_weight = 1e-3;
  int epochs = 1000;
  int batch_rollouts = 512;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  bool class_balance = true;

  void validate() const;
};

// Loss weight per class; N_total / (2 * N_class) when balancing.
struct ClassWeights {
  double success = 1.0;
  double failure = 1.0;
};
ClassWeights compute_class_weights(const TraceBatchRefs& batch, bool balance);

// Mutable view over one parameter tensor; is_weight marks L2-regularized ones.
struct TensorView {
  double* data;
  std::ptrdiff_t size;
  bool is_weight;
};

// ---- MLP probe: per-step scalar head whose sigmoids accumulate over time ----

struct MlpProbe {
  Eigen::MatrixXd w1;  // h x d
  Eigen::VectorXd b1;  // h
  Eigen::MatrixXd w2;  // 1 x h
  double b2 = 0.0;

  int input_dim() const { return static_cast<int>(w1.cols()); }
  int hidden_dim() const { return static_cast<int>(w1.rows()); }

  // uniform +-1/sqrt(fan_in)
  static MlpProbe init(int in_dim, int hidden, std::uint64_t seed);

  // per-step sigmoid(g(e_t)), each in (0,1)
  std::vector<double> step_probs(const Eigen::MatrixXd& emb) const;
  // s_t = running sum of step_probs; strictly increasing, s_t in (0, t)
  std::vector<double> score_trace(const Eigen::MatrixXd& emb) const;

  std::vector<TensorView> views();
  std::vector<TensorView> views() const;
};

struct MlpGrad {
  Eigen::MatrixXd w1;
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;
  double b2 = 0.0;
  static MlpGrad zeros_like(const MlpProbe& p);
  std::vector<TensorView> views();
};

// L1-style score loss: failures push s_t toward t, successes toward 0,
// summed over steps, class-weighted, mean over batch, plus l2 * sum ||W||^2.
double loss_mlp(const TraceBatchRefs& batch, const MlpProbe& probe, double l2,
                const ClassWeights& weights, MlpGrad* grad = nullptr);

// ---- LSTM probe: recurrent scorer with a sigmoid head ----

struct LstmProbe {
  // gate row order: input, forget, cell candidate, output
  Eigen::MatrixXd wx;  // 4h x d
  Eigen::MatrixXd wh;  // 4h x h
  Eigen::VectorXd b;   // 4h
  Eigen::MatrixXd wy;  // 1 x h
  double by = 0.0;

  int input_dim() const { return static_cast<int>(wx.cols()); }
  int hidden_dim() const { return static_cast<int>(wh.cols()); }

  // uniform +-1/sqrt(fan_in); forget-gate bias set to 1
  static LstmProbe init(int in_dim, int hidden, std::uint64_t seed);

  // s_t = sigmoid(head(h_t)); causal, each value in (0,1)
  std::vector<double> score_trace(const Eigen::MatrixXd& emb) const;

  std::vector<TensorView> views();
  std::vector<TensorView> views() const;
};

struct LstmGrad {
  Eigen::MatrixXd wx, wh;
  Eigen::VectorXd b;
  Eigen::MatrixXd wy;
  double by = 0.0;
  static LstmGrad zeros_like(const LstmProbe& p);
  std::vector<TensorView> views();
};

// Per-step binary cross entropy, summed over steps, class-weighted, mean
// over batch, plus l2 * sum ||W||^2.
double loss_lstm(const TraceBatchRefs& batch, const LstmProbe& probe, double l2,
                 const ClassWeights& weights, LstmGrad* grad = nullptr);

// ---- training ----

// Bias-corrected Adam over a fixed list of parameter tensors.
class Adam {
 public:
  Adam(const std::vector<TensorView>& params, const TrainConfig& cfg);
  void step(const std::vector<TensorView>& params,
            const std::vector<TensorView>& grads);

 private:
  TrainConfig cfg_;
  std::vector<Eigen::VectorXd> m_, v_;
  int t_ = 0;
};

enum class ProbeKind { Mlp, Lstm };

struct TrainResult {
  std::variant<MlpProbe, LstmProbe> probe;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

// Adam over analytic gradients for cfg.epochs of seeded rollout minibatches.
// Class weights are computed once from the full training batch.
TrainResult train_probe(const TraceBatch& train, ProbeKind kind,
                        const TrainConfig& cfg, int hidden = 256);

// ---- RND out-of-distribution scorer ----

struct RndNet {
  Eigen::MatrixXd w1;  // h x d
  Eigen::VectorXd b1;
  Eigen::MatrixXd w2;  // out x h
  Eigen::VectorXd b2;
  static RndNet init(int in_dim, int hidden, int out_dim, std::uint64_t seed);
  Eigen::VectorXd forward(const Eigen::VectorXd& e) const;
};

// Frozen random target + predictor trained to match it on one embedding set;
// the prediction error is the OOD score for that set.
struct RndModel {
  RndNet target;
  RndNet predictor;
  double error(const Eigen::VectorXd& e) const;  // mean squared residual
};

struct RndPair {
  RndModel succ;
  RndModel fail;
  // err_succ - err_fail: positive when e looks unlike successful data
  double score(const Eigen::VectorXd& e) const;
};

// Fits one RND model per bank side (rows = embeddings). Hidden 256 -> 128
// output by default.
RndPair rnd_fit(const Eigen::MatrixXd& succ_bank, const Eigen::MatrixXd& fail_bank,
                const TrainConfig& cfg, int hidden = 256, int out_dim = 128);

}  // namespace vigil

#endif
