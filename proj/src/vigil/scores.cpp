#include "vigil/scores.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vigil/error.hpp"
#include "vigil/rng.hpp"

namespace vigil {

// ---- token uncertainty ----

namespace {

void check_probs(const std::vector<double>& probs) {
  require(!probs.empty(), ErrorCode::InvalidArgument, "empty token list");
  for (double p : probs)
    require(p > 0.0 && p <= 1.0, ErrorCode::InvalidArgument,
            "token probability outside (0,1]");
}

void check_entropies(const std::vector<double>& entropies) {
  require(!entropies.empty(), ErrorCode::InvalidArgument, "empty token list");
  for (double h : entropies)
    require(h >= 0.0 && std::isfinite(h), ErrorCode::InvalidArgument,
            "token entropy must be finite and >= 0");
}

}  // namespace

double token_max_prob(const std::vector<double>& probs) {
  check_probs(probs);
  double best = -std::numeric_limits<double>::infinity();
  for (double p : probs) best = std::max(best, -std::log(p));
  return best;
}

double token_avg_prob(const std::vector<double>& probs) {
  check_probs(probs);
  double sum = 0.0;
  for (double p : probs) sum += std::log(p);
  return -sum / static_cast<double>(probs.size());
}

double token_max_entropy(const std::vector<double>& entropies) {
  check_entropies(entropies);
  return *std::max_element(entropies.begin(), entropies.end());
}

double token_avg_entropy(const std::vector<double>& entropies) {
  check_entropies(entropies);
  return std::accumulate(entropies.begin(), entropies.end(), 0.0) /
         static_cast<double>(entropies.size());
}

std::vector<double> accumulate(const std::vector<double>& values) {
  std::vector<double> out(values.size());
  double run = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    run += values[i];
    out[i] = run;
  }
  return out;
}

ScoreTrace accumulate(const ScoreTrace& trace) {
  ScoreTrace out = trace;
  out.values = accumulate(trace.values);
  return out;
}

// ---- reference bank + distance scores ----

double mahalanobis_distance(const Eigen::VectorXd& e, const Eigen::VectorXd& mu,
                            const Eigen::MatrixXd& cov_reg) {
  require(e.size() == mu.size() && cov_reg.rows() == e.size() &&
              cov_reg.cols() == e.size(),
          ErrorCode::Dimension, "mahalanobis_distance: dimension mismatch");
  Eigen::LDLT<Eigen::MatrixXd> ldlt(cov_reg);
  require(ldlt.info() == Eigen::Success && ldlt.isPositive(),
          ErrorCode::Numeric, "regularized covariance is not positive definite");
  Eigen::VectorXd diff = e - mu;
  double q = diff.dot(ldlt.solve(diff));
  return std::sqrt(std::max(q, 0.0));
}

namespace {

constexpr double kCovJitterRel = 1e-6;
constexpr double kCovJitterAbs = 1e-9;

void fit_stats(ReferenceBank::SetStats& s) {
  const long n = s.points.rows();
  const long d = s.points.cols();
  s.mean = s.points.colwise().mean().transpose();
  Eigen::MatrixXd centered = s.points.rowwise() - s.mean.transpose();
  if (n >= 2)
    s.cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  else
    s.cov = Eigen::MatrixXd::Zero(d, d);
  double eps =
      std::max(kCovJitterRel * s.cov.trace() / static_cast<double>(d),
               kCovJitterAbs);
  s.cov_reg = s.cov + eps * Eigen::MatrixXd::Identity(d, d);
  s.cov_reg_ldlt.compute(s.cov_reg);
  require(s.cov_reg_ldlt.info() == Eigen::Success && s.cov_reg_ldlt.isPositive(),
          ErrorCode::Numeric,
          "degenerate covariance after regularization");
}

// k-means with k-means++ seeding; fixed iteration budget, seeded.
Eigen::MatrixXd kmeans_fit(const Eigen::MatrixXd& pts, int clusters,
                           std::uint64_t seed) {
  const long n = pts.rows();
  const long d = pts.cols();
  require(n >= clusters, ErrorCode::InvalidArgument,
          "k-means: fewer points than clusters");
  Rng rng(seed);

  Eigen::MatrixXd centroids(clusters, d);
  std::vector<double> dist2(static_cast<std::size_t>(n),
                            std::numeric_limits<double>::infinity());
  centroids.row(0) = pts.row(static_cast<long>(rng.index(static_cast<std::size_t>(n))));
  for (int c = 1; c < clusters; ++c) {
    double total = 0.0;
    for (long i = 0; i < n; ++i) {
      double d2 = (pts.row(i) - centroids.row(c - 1)).squaredNorm();
      dist2[static_cast<std::size_t>(i)] =
          std::min(dist2[static_cast<std::size_t>(i)], d2);
      total += dist2[static_cast<std::size_t>(i)];
    }
    double r = rng.uniform() * total;
    long pick = n - 1;
    double run = 0.0;
    for (long i = 0; i < n; ++i) {
      run += dist2[static_cast<std::size_t>(i)];
      if (run >= r) {
        pick = i;
        break;
      }
    }
    centroids.row(c) = pts.row(pick);
  }

  std::vector<int> assign(static_cast<std::size_t>(n), 0);
  for (int iter = 0; iter < 50; ++iter) {
    bool changed = false;
    for (long i = 0; i < n; ++i) {
      int best = 0;
      double best_d = (pts.row(i) - centroids.row(0)).squaredNorm();
      for (int c = 1; c < clusters; ++c) {
        double d2 = (pts.row(i) - centroids.row(c)).squaredNorm();
        if (d2 < best_d) {
          best_d = d2;
          best = c;
        }
      }
      if (assign[static_cast<std::size_t>(i)] != best) {
        assign[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(clusters, d);
    std::vector<long> counts(static_cast<std::size_t>(clusters), 0);
    for (long i = 0; i < n; ++i) {
      sums.row(assign[static_cast<std::size_t>(i)]) += pts.row(i);
      counts[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])]++;
    }
    for (int c = 0; c < clusters; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0)
        centroids.row(c) =
            sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)]);
    if (!changed && iter > 0) break;
  }
  return centroids;
}

void fit_pca_kmeans(ReferenceBank::SetStats& s, const ReferenceBank::Options& o,
                    std::uint64_t side_seed) {
  const long d = s.points.cols();
  require(o.pca_dim >= 1 && o.pca_dim <= d, ErrorCode::InvalidArgument,
          "PCA dimension must lie in [1, feature dim]");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s.cov);
  require(eig.info() == Eigen::Success, ErrorCode::Numeric,
          "PCA eigendecomposition failed");
  // eigenvalues ascend; take the trailing pca_dim columns
  s.pca_basis = eig.eigenvectors().rightCols(o.pca_dim);
  Eigen::MatrixXd projected =
      (s.points.rowwise() - s.mean.transpose()) * s.pca_basis;
  s.centroids = kmeans_fit(projected, o.clusters, side_seed);
}

double knn_mean_distance(const Eigen::VectorXd& e, const Eigen::MatrixXd& pts,
                         int k, bool cosine) {
  const long n = pts.rows();
  require(k >= 1 && k <= n, ErrorCode::InvalidArgument,
          "k exceeds reference set size");
  std::vector<double> dist(static_cast<std::size_t>(n));
  if (cosine) {
    double en = e.norm();
    for (long i = 0; i < n; ++i) {
      double pn = pts.row(i).norm();
      double sim = (en > 0.0 && pn > 0.0) ? pts.row(i).dot(e) / (pn * en) : 0.0;
      dist[static_cast<std::size_t>(i)] = 1.0 - sim;
    }
  } else {
    for (long i = 0; i < n; ++i)
      dist[static_cast<std::size_t>(i)] = (pts.row(i).transpose() - e).norm();
  }
  std::nth_element(dist.begin(), dist.begin() + (k - 1), dist.end());
  double sum = std::accumulate(dist.begin(), dist.begin() + k, 0.0);
  return sum / static_cast<double>(k);
}

double pca_kmeans_distance(const Eigen::VectorXd& e,
                           const ReferenceBank::SetStats& s) {
  require(s.centroids.rows() > 0, ErrorCode::InvalidArgument,
          "bank was built without PCA-KMeans state");
  Eigen::VectorXd z = s.pca_basis.transpose() * (e - s.mean);
  double best = std::numeric_limits<double>::infinity();
  for (long c = 0; c < s.centroids.rows(); ++c)
    best = std::min(best, (s.centroids.row(c).transpose() - z).norm());
  return best;
}

}  // namespace

ReferenceBank::ReferenceBank(Eigen::MatrixXd succ, Eigen::MatrixXd fail,
                             const Options& opts)
    : opts_(opts) {
  require(succ.rows() >= 1 && fail.rows() >= 1, ErrorCode::InvalidArgument,
          "reference bank requires embeddings from both classes");
  require(succ.cols() == fail.cols(), ErrorCode::Dimension,
          "success/failure embedding dimensions differ");
  succ_.points = std::move(succ);
  fail_.points = std::move(fail);
  fit_stats(succ_);
  fit_stats(fail_);
  if (opts_.with_pca_kmeans) {
    fit_pca_kmeans(succ_, opts_, derive_seed(opts_.seed, 1));
    fit_pca_kmeans(fail_, opts_, derive_seed(opts_.seed, 2));
  }
}

double embedding_distance_score(const Eigen::VectorXd& e,
                                const ReferenceBank& bank,
                                const DistanceMetric& metric) {
  require(e.size() == bank.dim(), ErrorCode::Dimension,
          "embedding dimension does not match bank");
  switch (metric.kind) {
    case DistanceMetricKind::Mahalanobis: {
      require(bank.succ().points.rows() >= 2 && bank.fail().points.rows() >= 2,
              ErrorCode::InvalidArgument,
              "Mahalanobis needs >= 2 embeddings per class");
      auto dist = [&](const ReferenceBank::SetStats& s) {
        Eigen::VectorXd diff = e - s.mean;
        double q = diff.dot(s.cov_reg_ldlt.solve(diff));
        return std::sqrt(std::max(q, 0.0));
      };
      return dist(bank.succ()) - dist(bank.fail());
    }
    case DistanceMetricKind::EuclidKnn:
      return knn_mean_distance(e, bank.succ().points, metric.k, false) -
             knn_mean_distance(e, bank.fail().points, metric.k, false);
    case DistanceMetricKind::CosineKnn:
      return knn_mean_distance(e, bank.succ().points, metric.k, true) -
             knn_mean_distance(e, bank.fail().points, metric.k, true);
    case DistanceMetricKind::PcaKmeans:
      return pca_kmeans_distance(e, bank.succ()) -
             pca_kmeans_distance(e, bank.fail());
  }
  fail(ErrorCode::Internal, "unreachable distance metric");
}

// ---- sample consistency ----

ActionSubspace ActionSubspace::named(const std::string& name, int action_dim) {
  require(action_dim >= 1, ErrorCode::InvalidArgument,
          "action dimensionality must be >= 1");
  ActionSubspace s;
  s.name = name;
  if (name == "all") {
    for (int i = 0; i < action_dim; ++i) s.index_mask.insert(i);
  } else if (name == "translation") {
    for (int i = 0; i < std::min(3, action_dim); ++i) s.index_mask.insert(i);
  } else if (name == "rotation") {
    for (int i = 3; i < std::min(6, action_dim); ++i) s.index_mask.insert(i);
  } else if (name == "gripper") {
    if (action_dim >= 7) s.index_mask.insert(6);
  } else {
    fail(ErrorCode::InvalidArgument,
         "unknown action subspace '" + name +
             "' (expected all|translation|rotation|gripper)");
  }
  require(!s.index_mask.empty(), ErrorCode::InvalidArgument,
          "subspace '" + name + "' is empty for action dim " +
              std::to_string(action_dim));
  return s;
}

Eigen::MatrixXd flatten_chunk_samples(const std::vector<Eigen::MatrixXd>& samples) {
  require(!samples.empty(), ErrorCode::InvalidArgument, "no action samples");
  const long h = samples.front().rows();
  const long a = samples.front().cols();
  Eigen::MatrixXd out(static_cast<long>(samples.size()), h * a);
  for (std::size_t k = 0; k < samples.size(); ++k) {
    require(samples[k].rows() == h && samples[k].cols() == a,
            ErrorCode::Dimension, "action samples have mixed shapes");
    for (long t = 0; t < h; ++t)
      out.block(static_cast<long>(k), t * a, 1, a) = samples[k].row(t);
  }
  return out;
}

double total_variation(const Eigen::MatrixXd& samples,
                       const ActionSubspace& subspace, int action_dim) {
  const long k = samples.rows();
  const long d = samples.cols();
  require(k >= 2, ErrorCode::InvalidArgument,
          "total_variation needs at least 2 samples");
  require(action_dim >= 1 && d % action_dim == 0, ErrorCode::Dimension,
          "flattened width is not a multiple of the action dimensionality");
  for (int idx : subspace.index_mask)
    require(idx >= 0 && idx < action_dim, ErrorCode::InvalidArgument,
            "subspace index outside action dimensionality");
  double total = 0.0;
  for (long j = 0; j < d; ++j) {
    if (!subspace.index_mask.count(static_cast<int>(j % action_dim))) continue;
    double mean = samples.col(j).mean();
    total += (samples.col(j).array() - mean).square().sum() /
             static_cast<double>(k - 1);
  }
  return total;
}

// Ward linkage via the Lance-Williams recurrence on squared distances;
// initial inter-point distance is Euclidean, matching the usual convention
// where the threshold is compared against sqrt of the updated value.
double cluster_entropy(const Eigen::MatrixXd& samples, double distance_threshold) {
  require(samples.rows() >= 1, ErrorCode::InvalidArgument, "no samples");
  require(distance_threshold > 0.0, ErrorCode::InvalidArgument,
          "distance threshold must be > 0");
  const long n = samples.rows();

  std::vector<bool> alive(static_cast<std::size_t>(n), true);
  std::vector<double> size(static_cast<std::size_t>(n), 1.0);
  // squared Ward distances, upper triangle
  Eigen::MatrixXd d2 = Eigen::MatrixXd::Zero(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = i + 1; j < n; ++j)
      d2(i, j) = (samples.row(i) - samples.row(j)).squaredNorm();

  const double thr2 = distance_threshold * distance_threshold;
  long n_clusters = n;
  while (n_clusters > 1) {
    long bi = -1, bj = -1;
    double best = std::numeric_limits<double>::infinity();
    for (long i = 0; i < n; ++i) {
      if (!alive[static_cast<std::size_t>(i)]) continue;
      for (long j = i + 1; j < n; ++j) {
        if (!alive[static_cast<std::size_t>(j)]) continue;
        if (d2(i, j) < best) {
          best = d2(i, j);
          bi = i;
          bj = j;
        }
      }
    }
    if (best > thr2) break;  // minimum merge cost exceeds the threshold
    // merge bj into bi
    const double si = size[static_cast<std::size_t>(bi)];
    const double sj = size[static_cast<std::size_t>(bj)];
    for (long w = 0; w < n; ++w) {
      if (!alive[static_cast<std::size_t>(w)] || w == bi || w == bj) continue;
      const double sw = size[static_cast<std::size_t>(w)];
      double d_iw = bi < w ? d2(bi, w) : d2(w, bi);
      double d_jw = bj < w ? d2(bj, w) : d2(w, bj);
      double merged = ((si + sw) * d_iw + (sj + sw) * d_jw - sw * best) /
                      (si + sj + sw);
      (bi < w ? d2(bi, w) : d2(w, bi)) = merged;
    }
    size[static_cast<std::size_t>(bi)] = si + sj;
    alive[static_cast<std::size_t>(bj)] = false;
    --n_clusters;
  }

  double total = static_cast<double>(n);
  double entropy = 0.0;
  for (long i = 0; i < n; ++i) {
    if (!alive[static_cast<std::size_t>(i)]) continue;
    double p = size[static_cast<std::size_t>(i)] / total;
    entropy -= p * std::log(p);
  }
  return entropy;
}

// ---- MMD / action consistency ----

double mmd2_rbf(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y,
                double bandwidth) {
  require(x.rows() >= 1 && y.rows() >= 1, ErrorCode::InvalidArgument,
          "MMD needs at least one sample per side");
  require(x.cols() == y.cols(), ErrorCode::Dimension,
          "MMD sample dimensions differ");
  require(bandwidth > 0.0, ErrorCode::InvalidArgument,
          "RBF bandwidth must be > 0");
  const double inv = 1.0 / (2.0 * bandwidth * bandwidth);
  auto mean_kernel = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double sum = 0.0;
    for (long i = 0; i < a.rows(); ++i)
      for (long j = 0; j < b.rows(); ++j)
        sum += std::exp(-(a.row(i) - b.row(j)).squaredNorm() * inv);
    return sum / static_cast<double>(a.rows() * b.rows());
  };
  double v = mean_kernel(x, x) + mean_kernel(y, y) - 2.0 * mean_kernel(x, y);
  return std::max(v, 0.0);
}

namespace {

// rows [lo, lo+len) of each sample, flattened to one row per sample
Eigen::MatrixXd overlap_rows(const std::vector<Eigen::MatrixXd>& samples,
                             long lo, long len) {
  const long a = samples.front().cols();
  Eigen::MatrixXd out(static_cast<long>(samples.size()), len * a);
  for (std::size_t k = 0; k < samples.size(); ++k)
    for (long t = 0; t < len; ++t)
      out.block(static_cast<long>(k), t * a, 1, a) = samples[k].row(lo + t);
  return out;
}

}  // namespace

double stac_score(const std::vector<Eigen::MatrixXd>& prev_chunk_samples,
                  const std::vector<Eigen::MatrixXd>& curr_chunk_samples,
                  int replan_stride, double bandwidth) {
  require(!prev_chunk_samples.empty() && !curr_chunk_samples.empty(),
          ErrorCode::InvalidArgument, "empty chunk sample set");
  const long h = prev_chunk_samples.front().rows();
  require(curr_chunk_samples.front().rows() == h, ErrorCode::Dimension,
          "chunk horizons differ");
  require(replan_stride >= 1 && replan_stride < h, ErrorCode::InvalidArgument,
          "replan stride leaves no chunk overlap");
  const long len = h - replan_stride;
  Eigen::MatrixXd prev = overlap_rows(prev_chunk_samples, replan_stride, len);
  Eigen::MatrixXd curr = overlap_rows(curr_chunk_samples, 0, len);
  return mmd2_rbf(prev, curr, bandwidth);
}

double stac_single_score(const Eigen::MatrixXd& prev_chunk,
                         const Eigen::MatrixXd& curr_chunk, int replan_stride,
                         double bandwidth) {
  return stac_score({prev_chunk}, {curr_chunk}, replan_stride, bandwidth);
}

}  // namespace vigil
