#ifndef VIGIL_SCORES_HPP
#define VIGIL_SCORES_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "vigil/trace.hpp"

namespace vigil {

// Per-timestep failure scores for one rollout.
struct ScoreTrace {
  std::string rollout_id;
  std::vector<double> values;
  std::string method_tag;
};

// ---- token uncertainty (natural log throughout) ----

double token_max_prob(const std::vector<double>& probs);   // max_i(-log p_i)
double token_avg_prob(const std::vector<double>& probs);   // -(1/m) sum log p_i
double token_max_entropy(const std::vector<double>& entropies);
double token_avg_entropy(const std::vector<double>& entropies);

// Running prefix sums; the "cumsum" score hyperparameter.
std::vector<double> accumulate(const std::vector<double>& values);
ScoreTrace accumulate(const ScoreTrace& trace);

// ---- embedding distance scores ----

enum class DistanceMetricKind { Mahalanobis, EuclidKnn, CosineKnn, PcaKmeans };

struct DistanceMetric {
  DistanceMetricKind kind = DistanceMetricKind::Mahalanobis;
  int k = 10;           // kNN neighbor count
  int pca_dim = 32;     // PcaKmeans projection width
  int clusters = 16;    // PcaKmeans centroid count
};

// sqrt((e-mu)^T cov_reg^{-1} (e-mu)); cov_reg must be positive definite.
double mahalanobis_distance(const Eigen::VectorXd& e, const Eigen::VectorXd& mu,
                            const Eigen::MatrixXd& cov_reg);

struct BankOptions {
  bool with_pca_kmeans = false;
  int pca_dim = 32;
  int clusters = 16;
  std::uint64_t seed = 0;
};

// Embeddings from successful and failed training rollouts plus the fitted
// per-set statistics every distance metric reads.
class ReferenceBank {
 public:
  using Options = BankOptions;

  // rows of succ / fail are embeddings e_t
  ReferenceBank(Eigen::MatrixXd succ, Eigen::MatrixXd fail,
                const Options& opts = BankOptions());

  struct SetStats {
    Eigen::MatrixXd points;    // N x d
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;       // unbiased
    Eigen::MatrixXd cov_reg;   // cov + eps*I
    Eigen::LDLT<Eigen::MatrixXd> cov_reg_ldlt;
    // PcaKmeans state (present when Options::with_pca_kmeans)
    Eigen::MatrixXd pca_basis;      // d x pca_dim
    Eigen::MatrixXd centroids;      // clusters x pca_dim
  };

  const SetStats& succ() const { return succ_; }
  const SetStats& fail() const { return fail_; }
  int dim() const { return static_cast<int>(succ_.points.cols()); }
  const Options& options() const { return opts_; }

 private:
  SetStats succ_, fail_;
  Options opts_;
};

// d(e, E_succ) - d(e, E_fail) under the chosen metric.
double embedding_distance_score(const Eigen::VectorXd& e,
                                const ReferenceBank& bank,
                                const DistanceMetric& metric);

// ---- sample consistency ----

struct ActionSubspace {
  std::string name;               // all | translation | rotation | gripper
  std::set<int> index_mask;       // action-dimension indices, < action dim

  // x,y,z | rx,ry,rz | grip convention for a given action dimensionality.
  static ActionSubspace named(const std::string& name, int action_dim);
};

// trace of the unbiased sample covariance over the masked columns.
// samples: K x D with D = H*a (chunks flattened time-major); the mask keeps
// column j iff (j mod action_dim) is in the subspace.
double total_variation(const Eigen::MatrixXd& samples,
                       const ActionSubspace& subspace, int action_dim);

// Flatten K sampled chunks (H x a each) into a K x (H*a) matrix, time-major.
Eigen::MatrixXd flatten_chunk_samples(const std::vector<Eigen::MatrixXd>& samples);

// Agglomerative Ward clustering cut at distance_threshold; Shannon entropy
// (natural log) of the resulting cluster-size histogram.
double cluster_entropy(const Eigen::MatrixXd& samples, double distance_threshold);

// ---- action consistency (MMD on chunk overlap) ----

// Biased (V-statistic) squared MMD between row-sample sets, RBF kernel
// exp(-||x-y||^2 / (2 h^2)).
double mmd2_rbf(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                double bandwidth);

// Squared MMD between consecutive chunk predictions restricted to their
// overlapping timesteps. prev covers [t, t+H), curr covers [t+H', t+H'+H);
// the overlap is the last H-H' rows of prev vs the first H-H' rows of curr.
double stac_score(const std::vector<Eigen::MatrixXd>& prev_chunk_samples,
                  const std::vector<Eigen::MatrixXd>& curr_chunk_samples,
                  int replan_stride, double bandwidth);

double stac_single_score(const Eigen::MatrixXd& prev_chunk,
                         const Eigen::MatrixXd& curr_chunk, int replan_stride,
                         double bandwidth);

}  // namespace vigil

#endif
