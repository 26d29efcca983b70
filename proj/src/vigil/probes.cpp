#include "vigil/probes.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vigil/error.hpp"
#include "vigil/rng.hpp"

namespace vigil {

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// numerically stable -[y log s + (1-y) log(1-s)] with s = sigmoid(logit)
inline double bce_with_logit(double logit, double y) {
  return std::max(logit, 0.0) - logit * y + std::log1p(std::exp(-std::abs(logit)));
}

void fill_uniform(double* data, std::ptrdiff_t n, double bound, Rng& rng) {
  for (std::ptrdiff_t i = 0; i < n; ++i) data[i] = rng.uniform(-bound, bound);
}

void check_batch(const TraceBatchRefs& batch, int in_dim) {
  require(!batch.empty(), ErrorCode::InvalidArgument, "empty batch");
  for (const TraceExample* ex : batch) {
    require(ex->emb.rows() >= 1, ErrorCode::InvalidArgument,
            "example with no steps");
    require(ex->emb.cols() == in_dim, ErrorCode::Dimension,
            "embedding dim " + std::to_string(ex->emb.cols()) +
                " does not match probe input dim " + std::to_string(in_dim));
    require(ex->label == 0 || ex->label == 1, ErrorCode::InvalidArgument,
            "label must be 0 or 1");
  }
}

TraceBatchRefs as_refs(const TraceBatch& batch) {
  TraceBatchRefs refs;
  refs.reserve(batch.size());
  for (const TraceExample& ex : batch) refs.push_back(&ex);
  return refs;
}

}  // namespace

void TrainConfig::validate() const {
  require(learning_rate > 0.0, ErrorCode::InvalidArgument,
          "learning_rate must be > 0");
  require(l2_weight >= 0.0, ErrorCode::InvalidArgument,
          "l2_weight must be >= 0");
  require(epochs > 0, ErrorCode::InvalidArgument, "epochs must be > 0");
  require(batch_rollouts > 0, ErrorCode::InvalidArgument,
          "batch_rollouts must be > 0");
}

ClassWeights compute_class_weights(const TraceBatchRefs& batch, bool balance) {
  ClassWeights w;
  if (!balance) return w;
  double n_fail = 0.0, n_succ = 0.0;
  for (const TraceExample* ex : batch) (ex->label == 1 ? n_fail : n_succ) += 1.0;
  double total = n_fail + n_succ;
  w.success = n_succ > 0.0 ? total / (2.0 * n_succ) : 1.0;
  w.failure = n_fail > 0.0 ? total / (2.0 * n_fail) : 1.0;
  return w;
}

// ---- MLP probe ----

MlpProbe MlpProbe::init(int in_dim, int hidden, std::uint64_t seed) {
  require(in_dim >= 1 && hidden >= 1, ErrorCode::InvalidArgument,
          "probe dimensions must be >= 1");
  Rng rng(derive_seed(seed, 0xa11));
  MlpProbe p;
  p.w1.resize(hidden, in_dim);
  p.b1.resize(hidden);
  p.w2.resize(1, hidden);
  const double bound_in = 1.0 / std::sqrt(static_cast<double>(in_dim));
  const double bound_h = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill_uniform(p.w1.data(), p.w1.size(), bound_in, rng);
  fill_uniform(p.b1.data(), p.b1.size(), bound_in, rng);
  fill_uniform(p.w2.data(), p.w2.size(), bound_h, rng);
  p.b2 = rng.uniform(-bound_h, bound_h);
  return p;
}

std::vector<double> MlpProbe::step_probs(const Eigen::MatrixXd& emb) const {
  require(emb.rows() >= 1, ErrorCode::InvalidArgument, "empty trace");
  require(emb.cols() == input_dim(), ErrorCode::Dimension,
          "embedding dim does not match probe input dim");
  std::vector<double> probs(static_cast<std::size_t>(emb.rows()));
  Eigen::MatrixXd a = ((w1 * emb.transpose()).colwise() + b1).array().tanh();
  Eigen::RowVectorXd logits = (w2 * a).row(0).array() + b2;
  for (long t = 0; t < emb.rows(); ++t)
    probs[static_cast<std::size_t>(t)] = sigmoid(logits(t));
  return probs;
}

std::vector<double> MlpProbe::score_trace(const Eigen::MatrixXd& emb) const {
  std::vector<double> probs = step_probs(emb);
  double run = 0.0;
  for (double& p : probs) {
    run += p;
    p = run;
  }
  return probs;
}

std::vector<TensorView> MlpProbe::views() {
  return {{w1.data(), w1.size(), true},
          {b1.data(), b1.size(), false},
          {w2.data(), w2.size(), true},
          {&b2, 1, false}};
}

std::vector<TensorView> MlpProbe::views() const {
  return const_cast<MlpProbe*>(this)->views();
}

MlpGrad MlpGrad::zeros_like(const MlpProbe& p) {
  MlpGrad g;
  g.w1 = Eigen::MatrixXd::Zero(p.w1.rows(), p.w1.cols());
  g.b1 = Eigen::VectorXd::Zero(p.b1.size());
  g.w2 = Eigen::MatrixXd::Zero(p.w2.rows(), p.w2.cols());
  g.b2 = 0.0;
  return g;
}

std::vector<TensorView> MlpGrad::views() {
  return {{w1.data(), w1.size(), true},
          {b1.data(), b1.size(), false},
          {w2.data(), w2.size(), true},
          {&b2, 1, false}};
}

double loss_mlp(const TraceBatchRefs& batch, const MlpProbe& probe, double l2,
                const ClassWeights& weights, MlpGrad* grad) {
  check_batch(batch, probe.input_dim());
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  long n_cols = 0;
  for (const TraceExample* ex : batch) n_cols += ex->emb.rows();

  // columns = steps across the whole batch
  Eigen::MatrixXd x(probe.input_dim(), n_cols);
  Eigen::VectorXd coef(n_cols);  // sign * w_class/B * (T - tau + 1)
  double const_term = 0.0;       // sum_i w_i/B * y_i * T(T+1)/2
  {
    long c = 0;
    for (const TraceExample* ex : batch) {
      const long steps = ex->emb.rows();
      const double w =
          inv_b * (ex->label == 1 ? weights.failure : weights.success);
      const double sign = ex->label == 1 ? -1.0 : 1.0;
      if (ex->label == 1)
        const_term += w * 0.5 * static_cast<double>(steps) *
                      static_cast<double>(steps + 1);
      for (long t = 0; t < steps; ++t) {
        x.col(c) = ex->emb.row(t).transpose();
        coef(c) = sign * w * static_cast<double>(steps - t);
        ++c;
      }
    }
  }

  if (grad) *grad = MlpGrad::zeros_like(probe);

  double data = const_term;
  const long chunk = 16384;
  for (long lo = 0; lo < n_cols; lo += chunk) {
    const long len = std::min(chunk, n_cols - lo);
    Eigen::MatrixXd a =
        ((probe.w1 * x.middleCols(lo, len)).colwise() + probe.b1)
            .array()
            .tanh();
    Eigen::ArrayXd logits =
        (probe.w2 * a).row(0).transpose().array() + probe.b2;
    Eigen::ArrayXd p = logits.unaryExpr([](double v) { return sigmoid(v); });
    data += (coef.segment(lo, len).array() * p).sum();
    if (grad) {
      Eigen::VectorXd dlogit =
          (coef.segment(lo, len).array() * p * (1.0 - p)).matrix();
      grad->w2.noalias() += dlogit.transpose() * a.transpose();
      grad->b2 += dlogit.sum();
      Eigen::MatrixXd dz = (probe.w2.transpose() * dlogit.transpose())
                               .cwiseProduct((1.0 - a.array().square()).matrix());
      grad->w1.noalias() += dz * x.middleCols(lo, len).transpose();
      grad->b1.noalias() += dz.rowwise().sum();
    }
  }

  double reg = probe.w1.squaredNorm() + probe.w2.squaredNorm();
  if (grad) {
    grad->w1 += 2.0 * l2 * probe.w1;
    grad->w2 += 2.0 * l2 * probe.w2;
  }
  return data + l2 * reg;
}

// ---- LSTM probe ----

LstmProbe LstmProbe::init(int in_dim, int hidden, std::uint64_t seed) {
  require(in_dim >= 1 && hidden >= 1, ErrorCode::InvalidArgument,
          "probe dimensions must be >= 1");
  Rng rng(derive_seed(seed, 0xb22));
  LstmProbe p;
  p.wx.resize(4 * hidden, in_dim);
  p.wh.resize(4 * hidden, hidden);
  p.b.resize(4 * hidden);
  p.wy.resize(1, hidden);
  const double bound_in = 1.0 / std::sqrt(static_cast<double>(in_dim));
  const double bound_h = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill_uniform(p.wx.data(), p.wx.size(), bound_in, rng);
  fill_uniform(p.wh.data(), p.wh.size(), bound_h, rng);
  fill_uniform(p.b.data(), p.b.size(), bound_h, rng);
  p.b.segment(hidden, hidden).setConstant(1.0);  // forget-gate bias
  fill_uniform(p.wy.data(), p.wy.size(), bound_h, rng);
  p.by = rng.uniform(-bound_h, bound_h);
  return p;
}

std::vector<double> LstmProbe::score_trace(const Eigen::MatrixXd& emb) const {
  require(emb.rows() >= 1, ErrorCode::InvalidArgument, "empty trace");
  require(emb.cols() == input_dim(), ErrorCode::Dimension,
          "embedding dim does not match probe input dim");
  const int h = hidden_dim();
  Eigen::VectorXd hs = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd cs = Eigen::VectorXd::Zero(h);
  std::vector<double> out(static_cast<std::size_t>(emb.rows()));
  for (long t = 0; t < emb.rows(); ++t) {
    Eigen::VectorXd gates = wx * emb.row(t).transpose() + wh * hs + b;
    Eigen::ArrayXd gi = gates.segment(0, h).array().unaryExpr(
        [](double v) { return sigmoid(v); });
    Eigen::ArrayXd gf = gates.segment(h, h).array().unaryExpr(
        [](double v) { return sigmoid(v); });
    Eigen::ArrayXd gc = gates.segment(2 * h, h).array().tanh();
    Eigen::ArrayXd go = gates.segment(3 * h, h).array().unaryExpr(
        [](double v) { return sigmoid(v); });
    cs = (gf * cs.array() + gi * gc).matrix();
    hs = (go * cs.array().tanh()).matrix();
    out[static_cast<std::size_t>(t)] = sigmoid((wy * hs)(0, 0) + by);
  }
  return out;
}

std::vector<TensorView> LstmProbe::views() {
  return {{wx.data(), wx.size(), true},
          {wh.data(), wh.size(), true},
          {b.data(), b.size(), false},
          {wy.data(), wy.size(), true},
          {&by, 1, false}};
}

std::vector<TensorView> LstmProbe::views() const {
  return const_cast<LstmProbe*>(this)->views();
}

LstmGrad LstmGrad::zeros_like(const LstmProbe& p) {
  LstmGrad g;
  g.wx = Eigen::MatrixXd::Zero(p.wx.rows(), p.wx.cols());
  g.wh = Eigen::MatrixXd::Zero(p.wh.rows(), p.wh.cols());
  g.b = Eigen::VectorXd::Zero(p.b.size());
  g.wy = Eigen::MatrixXd::Zero(p.wy.rows(), p.wy.cols());
  g.by = 0.0;
  return g;
}

std::vector<TensorView> LstmGrad::views() {
  return {{wx.data(), wx.size(), true},
          {wh.data(), wh.size(), true},
          {b.data(), b.size(), false},
          {wy.data(), wy.size(), true},
          {&by, 1, false}};
}

double loss_lstm(const TraceBatchRefs& batch, const LstmProbe& probe, double l2,
                 const ClassWeights& weights, LstmGrad* grad) {
  check_batch(batch, probe.input_dim());
  const int h = probe.hidden_dim();
  const int d = probe.input_dim();
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  if (grad) *grad = LstmGrad::zeros_like(probe);
  double data = 0.0;

  // process the batch in column chunks; keeps the stored activations bounded
  long t_max_all = 0;
  for (const TraceExample* ex : batch)
    t_max_all = std::max(t_max_all, ex->emb.rows());
  const long budget = 48L * 1000 * 1000;  // doubles
  long chunk_cols =
      std::max(1L, budget / std::max(1L, 6L * h * std::max(1L, t_max_all)));
  chunk_cols = std::min(chunk_cols, static_cast<long>(batch.size()));

  for (std::size_t lo = 0; lo < batch.size();
       lo += static_cast<std::size_t>(chunk_cols)) {
    const long nb = std::min<long>(chunk_cols,
                                   static_cast<long>(batch.size() - lo));
    long t_max = 0;
    for (long j = 0; j < nb; ++j)
      t_max = std::max(t_max, batch[lo + static_cast<std::size_t>(j)]->emb.rows());

    Eigen::VectorXd wcol(nb), ycol(nb);
    std::vector<long> lens(static_cast<std::size_t>(nb));
    for (long j = 0; j < nb; ++j) {
      const TraceExample* ex = batch[lo + static_cast<std::size_t>(j)];
      lens[static_cast<std::size_t>(j)] = ex->emb.rows();
      ycol(j) = ex->label;
      wcol(j) = inv_b * (ex->label == 1 ? weights.failure : weights.success);
    }

    // stored forward state per step
    std::vector<Eigen::MatrixXd> gi(t_max), gf(t_max), gc(t_max), go(t_max),
        cs(t_max), th(t_max);
    std::vector<Eigen::MatrixXd> xs(t_max);
    std::vector<Eigen::RowVectorXd> dlogit(t_max);

    Eigen::MatrixXd hprev = Eigen::MatrixXd::Zero(h, nb);
    Eigen::MatrixXd cprev = Eigen::MatrixXd::Zero(h, nb);
    for (long t = 0; t < t_max; ++t) {
      Eigen::MatrixXd x = Eigen::MatrixXd::Zero(d, nb);
      for (long j = 0; j < nb; ++j)
        if (t < lens[static_cast<std::size_t>(j)])
          x.col(j) = batch[lo + static_cast<std::size_t>(j)]->emb.row(t).transpose();
      Eigen::MatrixXd gates =
          ((probe.wx * x + probe.wh * hprev).colwise() + probe.b);
      gi[t] = gates.topRows(h).array().unaryExpr(
          [](double v) { return sigmoid(v); });
      gf[t] = gates.middleRows(h, h).array().unaryExpr(
          [](double v) { return sigmoid(v); });
      gc[t] = gates.middleRows(2 * h, h).array().tanh();
      go[t] = gates.middleRows(3 * h, h).array().unaryExpr(
          [](double v) { return sigmoid(v); });
      cs[t] = gf[t].cwiseProduct(cprev) + gi[t].cwiseProduct(gc[t]);
      th[t] = cs[t].array().tanh();
      Eigen::MatrixXd hcur = go[t].cwiseProduct(th[t]);
      Eigen::RowVectorXd logits =
          (probe.wy * hcur).row(0).array() + probe.by;
      dlogit[t].resize(nb);
      for (long j = 0; j < nb; ++j) {
        if (t < lens[static_cast<std::size_t>(j)]) {
          data += wcol(j) * bce_with_logit(logits(j), ycol(j));
          dlogit[t](j) = wcol(j) * (sigmoid(logits(j)) - ycol(j));
        } else {
          dlogit[t](j) = 0.0;
        }
      }
      xs[t] = std::move(x);
      hprev = std::move(hcur);
      cprev = cs[t];
    }

    if (grad) {
      Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(h, nb);
      Eigen::MatrixXd dc = Eigen::MatrixXd::Zero(h, nb);
      for (long t = t_max - 1; t >= 0; --t) {
        Eigen::MatrixXd hcur = go[t].cwiseProduct(th[t]);
        grad->wy.noalias() += dlogit[t] * hcur.transpose();
        grad->by += dlogit[t].sum();
        dh.noalias() += probe.wy.transpose() * dlogit[t];

        Eigen::MatrixXd dout = dh.cwiseProduct(th[t]);
        dc += dh.cwiseProduct(go[t]).cwiseProduct(
            (1.0 - th[t].array().square()).matrix());
        Eigen::MatrixXd cm1 = t > 0 ? cs[t - 1]
                                    : Eigen::MatrixXd::Zero(h, nb);
        Eigen::MatrixXd din = dc.cwiseProduct(gc[t]);
        Eigen::MatrixXd dfor = dc.cwiseProduct(cm1);
        Eigen::MatrixXd dcand = dc.cwiseProduct(gi[t]);

        Eigen::MatrixXd dgates(4 * h, nb);
        dgates.topRows(h) =
            din.cwiseProduct(gi[t]).cwiseProduct((1.0 - gi[t].array()).matrix());
        dgates.middleRows(h, h) = dfor.cwiseProduct(gf[t]).cwiseProduct(
            (1.0 - gf[t].array()).matrix());
        dgates.middleRows(2 * h, h) =
            dcand.cwiseProduct((1.0 - gc[t].array().square()).matrix());
        dgates.middleRows(3 * h, h) = dout.cwiseProduct(go[t]).cwiseProduct(
            (1.0 - go[t].array()).matrix());

        grad->wx.noalias() += dgates * xs[t].transpose();
        Eigen::MatrixXd hm1 =
            t > 0 ? go[t - 1].cwiseProduct(th[t - 1]).eval()
                  : Eigen::MatrixXd::Zero(h, nb).eval();
        grad->wh.noalias() += dgates * hm1.transpose();
        grad->b.noalias() += dgates.rowwise().sum();

        dh.noalias() = probe.wh.transpose() * dgates;
        dc = dc.cwiseProduct(gf[t]);
      }
    }
  }

  double reg = probe.wx.squaredNorm() + probe.wh.squaredNorm() +
               probe.wy.squaredNorm();
  if (grad) {
    grad->wx += 2.0 * l2 * probe.wx;
    grad->wh += 2.0 * l2 * probe.wh;
    grad->wy += 2.0 * l2 * probe.wy;
  }
  return data + l2 * reg;
}

// ---- Adam ----

Adam::Adam(const std::vector<TensorView>& params, const TrainConfig& cfg)
    : cfg_(cfg) {
  for (const TensorView& v : params) {
    m_.emplace_back(Eigen::VectorXd::Zero(v.size));
    v_.emplace_back(Eigen::VectorXd::Zero(v.size));
  }
}

void Adam::step(const std::vector<TensorView>& params,
                const std::vector<TensorView>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
  const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Eigen::Map<Eigen::VectorXd> p(params[i].data, params[i].size);
    Eigen::Map<const Eigen::VectorXd> g(grads[i].data, grads[i].size);
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] +
            (1.0 - cfg_.beta2) * g.array().square().matrix();
    p.array() -= cfg_.learning_rate * (m_[i].array() / bc1) /
                 ((v_[i].array() / bc2).sqrt() + cfg_.adam_eps);
  }
}

TrainResult train_probe(const TraceBatch& train, ProbeKind kind,
                        const TrainConfig& cfg, int hidden) {
  cfg.validate();
  TraceBatchRefs all = as_refs(train);
  require(!all.empty(), ErrorCode::InvalidArgument, "empty training set");
  bool has_fail = false, has_succ = false;
  for (const TraceExample* ex : all)
    (ex->label == 1 ? has_fail : has_succ) = true;
  require(has_fail && has_succ, ErrorCode::SingleClass,
          "training set must contain both successful and failed rollouts");

  const int in_dim = static_cast<int>(train.front().emb.cols());
  const ClassWeights weights = compute_class_weights(all, cfg.class_balance);

  TrainResult result;
  MlpProbe mlp;
  LstmProbe lstm;
  std::vector<TensorView> params;
  if (kind == ProbeKind::Mlp) {
    mlp = MlpProbe::init(in_dim, hidden, derive_seed(cfg.seed, 1));
    params = mlp.views();
    result.initial_loss = loss_mlp(all, mlp, cfg.l2_weight, weights);
  } else {
    lstm = LstmProbe::init(in_dim, hidden, derive_seed(cfg.seed, 1));
    params = lstm.views();
    result.initial_loss = loss_lstm(all, lstm, cfg.l2_weight, weights);
  }

  Adam adam(params, cfg);
  Rng shuffle_rng(derive_seed(cfg.seed, 2));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  MlpGrad mgrad;
  LstmGrad lgrad;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t lo = 0; lo < order.size();
         lo += static_cast<std::size_t>(cfg.batch_rollouts)) {
      const std::size_t hi = std::min(
          order.size(), lo + static_cast<std::size_t>(cfg.batch_rollouts));
      TraceBatchRefs mb;
      mb.reserve(hi - lo);
      for (std::size_t i = lo; i < hi; ++i) mb.push_back(&train[order[i]]);

      double loss;
      if (kind == ProbeKind::Mlp) {
        loss = loss_mlp(mb, mlp, cfg.l2_weight, weights, &mgrad);
        adam.step(params, mgrad.views());
      } else {
        loss = loss_lstm(mb, lstm, cfg.l2_weight, weights, &lgrad);
        adam.step(params, lgrad.views());
      }
      require(std::isfinite(loss), ErrorCode::Numeric,
              "non-finite loss at epoch " + std::to_string(epoch) +
                  ", batch offset " + std::to_string(lo));
    }
  }

  if (kind == ProbeKind::Mlp) {
    result.final_loss = loss_mlp(all, mlp, cfg.l2_weight, weights);
    result.probe = std::move(mlp);
  } else {
    result.final_loss = loss_lstm(all, lstm, cfg.l2_weight, weights);
    result.probe = std::move(lstm);
  }
  return result;
}

// ---- RND ----

RndNet RndNet::init(int in_dim, int hidden, int out_dim, std::uint64_t seed) {
  require(in_dim >= 1 && hidden >= 1 && out_dim >= 1,
          ErrorCode::InvalidArgument, "RND dimensions must be >= 1");
  Rng rng(derive_seed(seed, 0xc33));
  RndNet n;
  n.w1.resize(hidden, in_dim);
  n.b1.resize(hidden);
  n.w2.resize(out_dim, hidden);
  n.b2.resize(out_dim);
  const double bound_in = 1.0 / std::sqrt(static_cast<double>(in_dim));
  const double bound_h = 1.0 / std::sqrt(static_cast<double>(hidden));
  fill_uniform(n.w1.data(), n.w1.size(), bound_in, rng);
  fill_uniform(n.b1.data(), n.b1.size(), bound_in, rng);
  fill_uniform(n.w2.data(), n.w2.size(), bound_h, rng);
  fill_uniform(n.b2.data(), n.b2.size(), bound_h, rng);
  return n;
}

Eigen::VectorXd RndNet::forward(const Eigen::VectorXd& e) const {
  require(e.size() == w1.cols(), ErrorCode::Dimension,
          "embedding dim does not match RND input dim");
  return w2 * (w1 * e + b1).array().tanh().matrix() + b2;
}

double RndModel::error(const Eigen::VectorXd& e) const {
  Eigen::VectorXd diff = predictor.forward(e) - target.forward(e);
  return diff.squaredNorm() / static_cast<double>(diff.size());
}

double RndPair::score(const Eigen::VectorXd& e) const {
  return succ.error(e) - fail.error(e);
}

namespace {

RndModel rnd_fit_side(const Eigen::MatrixXd& bank, const TrainConfig& cfg,
                      int hidden, int out_dim, std::uint64_t side_seed) {
  require(bank.rows() >= 1, ErrorCode::InvalidArgument,
          "RND bank side is empty");
  const int d = static_cast<int>(bank.cols());
  RndModel model;
  model.target = RndNet::init(d, hidden, out_dim, derive_seed(side_seed, 1));
  model.predictor = RndNet::init(d, hidden, out_dim, derive_seed(side_seed, 2));

  RndNet& net = model.predictor;
  std::vector<TensorView> params = {{net.w1.data(), net.w1.size(), true},
                                    {net.b1.data(), net.b1.size(), false},
                                    {net.w2.data(), net.w2.size(), true},
                                    {net.b2.data(), net.b2.size(), false}};
  Adam adam(params, cfg);
  Rng shuffle_rng(derive_seed(side_seed, 3));
  std::vector<std::size_t> order(static_cast<std::size_t>(bank.rows()));
  std::iota(order.begin(), order.end(), 0);

  RndNet g;  // gradient buffers, same shapes
  g.w1.resizeLike(net.w1);
  g.b1.resizeLike(net.b1);
  g.w2.resizeLike(net.w2);
  g.b2.resizeLike(net.b2);
  std::vector<TensorView> grads = {{g.w1.data(), g.w1.size(), true},
                                   {g.b1.data(), g.b1.size(), false},
                                   {g.w2.data(), g.w2.size(), true},
                                   {g.b2.data(), g.b2.size(), false}};

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t lo = 0; lo < order.size();
         lo += static_cast<std::size_t>(cfg.batch_rollouts)) {
      const std::size_t hi = std::min(
          order.size(), lo + static_cast<std::size_t>(cfg.batch_rollouts));
      const long nb = static_cast<long>(hi - lo);
      Eigen::MatrixXd x(d, nb);
      for (long j = 0; j < nb; ++j)
        x.col(j) = bank.row(static_cast<long>(order[lo + static_cast<std::size_t>(j)]))
                       .transpose();
      // mean over batch and output dims of squared residual to the target
      Eigen::MatrixXd a = ((net.w1 * x).colwise() + net.b1).array().tanh();
      Eigen::MatrixXd pred = (net.w2 * a).colwise() + net.b2;
      Eigen::MatrixXd ta =
          ((model.target.w1 * x).colwise() + model.target.b1).array().tanh();
      Eigen::MatrixXd targ = (model.target.w2 * ta).colwise() + model.target.b2;
      Eigen::MatrixXd diff = pred - targ;
      double loss = diff.squaredNorm() / static_cast<double>(diff.size());
      require(std::isfinite(loss), ErrorCode::Numeric,
              "non-finite RND loss at epoch " + std::to_string(epoch));
      Eigen::MatrixXd dout = (2.0 / static_cast<double>(diff.size())) * diff;
      g.w2.noalias() = dout * a.transpose();
      g.b2.noalias() = dout.rowwise().sum();
      Eigen::MatrixXd dz = (net.w2.transpose() * dout)
                               .cwiseProduct((1.0 - a.array().square()).matrix());
      g.w1.noalias() = dz * x.transpose();
      g.b1.noalias() = dz.rowwise().sum();
      adam.step(params, grads);
    }
  }
  return model;
}

}  // namespace

RndPair rnd_fit(const Eigen::MatrixXd& succ_bank, const Eigen::MatrixXd& fail_bank,
                const TrainConfig& cfg, int hidden, int out_dim) {
  cfg.validate();
  require(succ_bank.rows() >= 1 && fail_bank.rows() >= 1,
          ErrorCode::InvalidArgument,
          "RND requires embeddings from both classes");
  require(succ_bank.cols() == fail_bank.cols(), ErrorCode::Dimension,
          "success/failure embedding dimensions differ");
  // Both sides share one seed: identical banks then yield identical models,
  // so the score is exactly zero by symmetry.
  RndPair pair;
  pair.succ = rnd_fit_side(succ_bank, cfg, hidden, out_dim, cfg.seed);
  pair.fail = rnd_fit_side(fail_bank, cfg, hidden, out_dim, cfg.seed);
  return pair;
}

}  // namespace vigil
