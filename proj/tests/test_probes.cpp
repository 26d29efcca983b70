#include <doctest.h>

#include <cmath>

#include "vigil/error.hpp"
#include "vigil/probes.hpp"
#include "vigil/rng.hpp"

using namespace vigil;

namespace {

Eigen::MatrixXd random_emb(long steps, long dim, Rng& rng) {
  Eigen::MatrixXd m(steps, dim);
  for (long r = 0; r < steps; ++r)
    for (long c = 0; c < dim; ++c) m(r, c) = rng.normal();
  return m;
}

MlpProbe zero_mlp(int d, int h) {
  MlpProbe p = MlpProbe::init(d, h, 0);
  p.w1.setZero();
  p.b1.setZero();
  p.w2.setZero();
  p.b2 = 0;
  return p;
}

LstmProbe zero_lstm(int d, int h) {
  LstmProbe p = LstmProbe::init(d, h, 0);
  p.wx.setZero();
  p.wh.setZero();
  p.b.setZero();
  p.wy.setZero();
  p.by = 0;
  return p;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// scalar re-evaluation of the MLP head and prefix sum
std::vector<double> mlp_trace_oracle(const MlpProbe& p,
                                     const Eigen::MatrixXd& emb) {
  std::vector<double> out;
  double run = 0;
  for (long t = 0; t < emb.rows(); ++t) {
    double logit = p.b2;
    for (long j = 0; j < p.w1.rows(); ++j) {
      double z = p.b1(j);
      for (long c = 0; c < emb.cols(); ++c) z += p.w1(j, c) * emb(t, c);
      logit += p.w2(0, j) * std::tanh(z);
    }
    run += sigmoid(logit);
    out.push_back(run);
  }
  return out;
}

// scalar re-evaluation of the LSTM recurrences, gate order i,f,g,o
std::vector<double> lstm_trace_oracle(const LstmProbe& p,
                                      const Eigen::MatrixXd& emb) {
  const int h = p.hidden_dim();
  std::vector<double> hs(static_cast<std::size_t>(h), 0.0);
  std::vector<double> cs(static_cast<std::size_t>(h), 0.0);
  std::vector<double> out;
  for (long t = 0; t < emb.rows(); ++t) {
    std::vector<double> hs_new(static_cast<std::size_t>(h));
    std::vector<double> cs_new(static_cast<std::size_t>(h));
    for (int j = 0; j < h; ++j) {
      auto gate = [&](int block) {
        double g = p.b(block * h + j);
        for (long c = 0; c < emb.cols(); ++c)
          g += p.wx(block * h + j, c) * emb(t, c);
        for (int k = 0; k < h; ++k)
          g += p.wh(block * h + j, k) * hs[static_cast<std::size_t>(k)];
        return g;
      };
      const double gi = sigmoid(gate(0));
      const double gf = sigmoid(gate(1));
      const double gc = std::tanh(gate(2));
      const double go = sigmoid(gate(3));
      cs_new[static_cast<std::size_t>(j)] =
          gf * cs[static_cast<std::size_t>(j)] + gi * gc;
      hs_new[static_cast<std::size_t>(j)] =
          go * std::tanh(cs_new[static_cast<std::size_t>(j)]);
    }
    hs = hs_new;
    cs = cs_new;
    double logit = p.by;
    for (int k = 0; k < h; ++k)
      logit += p.wy(0, k) * hs[static_cast<std::size_t>(k)];
    out.push_back(sigmoid(logit));
  }
  return out;
}

// finite-difference check over a few sampled parameters
template <typename Probe, typename Grad, typename LossFn>
double max_fd_rel_error(Probe& probe, Grad& grad, const TraceBatchRefs& batch,
                        double l2, const ClassWeights& w, LossFn loss,
                        int n_params, Rng& rng) {
  loss(batch, probe, l2, w, &grad);
  auto pviews = probe.views();
  auto gviews = grad.views();
  double worst = 0;
  for (int s = 0; s < n_params; ++s) {
    const std::size_t vi = rng.index(pviews.size());
    const std::ptrdiff_t k =
        static_cast<std::ptrdiff_t>(rng.index(static_cast<std::size_t>(pviews[vi].size)));
    const double save = pviews[vi].data[k];
    const double h = 1e-4;
    pviews[vi].data[k] = save + h;
    const double lp = loss(batch, probe, l2, w, nullptr);
    pviews[vi].data[k] = save - h;
    const double lm = loss(batch, probe, l2, w, nullptr);
    pviews[vi].data[k] = save;
    const double fd = (lp - lm) / (2 * h);
    const double an = gviews[vi].data[k];
    const double rel =
        std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace

TEST_SUITE("probes") {

TEST_CASE("zero MLP scores half per step") {
  MlpProbe p = zero_mlp(3, 8);
  Eigen::MatrixXd emb = Eigen::MatrixXd::Random(5, 3);
  std::vector<double> s = p.score_trace(emb);
  for (std::size_t t = 0; t < s.size(); ++t)
    CHECK(s[t] == doctest::Approx(0.5 * (t + 1)));
}

TEST_CASE("saturated MLP approaches but never reaches t") {
  MlpProbe p = zero_mlp(3, 8);
  p.b2 = 30.0;
  Eigen::MatrixXd emb = Eigen::MatrixXd::Random(6, 3);
  std::vector<double> s = p.score_trace(emb);
  for (std::size_t t = 0; t < s.size(); ++t) {
    CHECK(s[t] < static_cast<double>(t + 1));
    CHECK(s[t] == doctest::Approx(static_cast<double>(t + 1)).epsilon(1e-9));
  }
}

TEST_CASE("MLP trace matches a scalar oracle and stays in (0, t)") {
  Rng rng(31);
  for (int rep = 0; rep < 20; ++rep) {
    MlpProbe p = MlpProbe::init(4, 16, rep);
    Eigen::MatrixXd emb = random_emb(7, 4, rng);
    std::vector<double> got = p.score_trace(emb);
    std::vector<double> want = mlp_trace_oracle(p, emb);
    double prev = 0;
    for (std::size_t t = 0; t < got.size(); ++t) {
      CHECK(got[t] == doctest::Approx(want[t]).epsilon(1e-12));
      CHECK(got[t] > prev);  // strictly increasing
      CHECK(got[t] > 0.0);
      CHECK(got[t] < static_cast<double>(t + 1));
      prev = got[t];
    }
  }
}

TEST_CASE("zero LSTM scores exactly half") {
  LstmProbe p = zero_lstm(3, 8);
  Eigen::MatrixXd emb = Eigen::MatrixXd::Random(5, 3);
  for (double v : p.score_trace(emb)) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("LSTM is causal") {
  Rng rng(32);
  LstmProbe p = LstmProbe::init(4, 8, 5);
  Eigen::MatrixXd emb = random_emb(6, 4, rng);
  std::vector<double> base = p.score_trace(emb);
  Eigen::MatrixXd bumped = emb;
  bumped.row(4).array() += 10.0;
  std::vector<double> other = p.score_trace(bumped);
  for (int t = 0; t < 4; ++t) CHECK(base[static_cast<std::size_t>(t)] ==
                                    other[static_cast<std::size_t>(t)]);
  CHECK(base[4] != other[4]);
}

TEST_CASE("LSTM trace matches a scalar recurrence oracle, bounded in (0,1)") {
  Rng rng(33);
  for (int rep = 0; rep < 10; ++rep) {
    LstmProbe p = LstmProbe::init(3, 6, 100 + rep);
    Eigen::MatrixXd emb = random_emb(5, 3, rng);
    std::vector<double> got = p.score_trace(emb);
    std::vector<double> want = lstm_trace_oracle(p, emb);
    for (std::size_t t = 0; t < got.size(); ++t) {
      CHECK(got[t] == doctest::Approx(want[t]).epsilon(1e-12));
      CHECK(got[t] > 0.0);
      CHECK(got[t] < 1.0);
    }
  }
}

TEST_CASE("MLP loss closed forms") {
  // zero probe, one failed rollout of length T: 0.5 * T(T+1)/2
  const int T = 9;
  MlpProbe p = zero_mlp(2, 4);
  TraceBatch batch;
  batch.push_back({Eigen::MatrixXd::Random(T, 2), 1});
  TraceBatchRefs refs = {&batch[0]};
  ClassWeights w;  // unit weights
  CHECK(loss_mlp(refs, p, 0.0, w) ==
        doctest::Approx(0.5 * T * (T + 1) / 2.0));

  // saturated probe drives a failed rollout's data term to zero
  MlpProbe sat = zero_mlp(2, 4);
  sat.b2 = 40.0;
  CHECK(loss_mlp(refs, sat, 0.0, w) == doctest::Approx(0.0).epsilon(1e-9));

  // and a successful rollout's data term to zero when saturated low
  MlpProbe low = zero_mlp(2, 4);
  low.b2 = -40.0;
  batch[0].label = 0;
  CHECK(loss_mlp(refs, low, 0.0, w) == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("LSTM loss closed form at s=0.5") {
  const int T = 7;
  LstmProbe p = zero_lstm(2, 4);
  TraceBatch batch;
  batch.push_back({Eigen::MatrixXd::Random(T, 2), 1});
  TraceBatchRefs refs = {&batch[0]};
  ClassWeights w;
  CHECK(loss_lstm(refs, p, 0.0, w) == doctest::Approx(T * std::log(2.0)));
}

TEST_CASE("LSTM loss matches a per-step BCE oracle") {
  Rng rng(34);
  for (int rep = 0; rep < 10; ++rep) {
    LstmProbe p = LstmProbe::init(3, 6, 200 + rep);
    TraceBatch batch;
    for (int i = 0; i < 4; ++i)
      batch.push_back({random_emb(4 + i, 3, rng), i % 2});
    TraceBatchRefs refs;
    for (auto& ex : batch) refs.push_back(&ex);
    ClassWeights w = compute_class_weights(refs, true);

    double want = 0;
    for (const TraceExample& ex : batch) {
      const double cw = ex.label ? w.failure : w.success;
      double ll = 0;
      for (double s : p.score_trace(ex.emb))
        ll -= ex.label ? std::log(s) : std::log(1 - s);
      want += cw * ll / static_cast<double>(batch.size());
    }
    want += 0.01 * (p.wx.squaredNorm() + p.wh.squaredNorm() +
                    p.wy.squaredNorm());
    CHECK(loss_lstm(refs, p, 0.01, w) ==
          doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("MLP loss matches a trace-based oracle") {
  Rng rng(35);
  for (int rep = 0; rep < 10; ++rep) {
    MlpProbe p = MlpProbe::init(3, 8, 300 + rep);
    TraceBatch batch;
    for (int i = 0; i < 4; ++i)
      batch.push_back({random_emb(5, 3, rng), i % 2});
    TraceBatchRefs refs;
    for (auto& ex : batch) refs.push_back(&ex);
    ClassWeights w = compute_class_weights(refs, true);

    double want = 0;
    for (const TraceExample& ex : batch) {
      const double cw = ex.label ? w.failure : w.success;
      std::vector<double> s = p.score_trace(ex.emb);
      double ll = 0;
      for (std::size_t t = 0; t < s.size(); ++t)
        ll += ex.label ? (static_cast<double>(t + 1) - s[t]) : s[t];
      want += cw * ll / static_cast<double>(batch.size());
    }
    want += 0.02 * (p.w1.squaredNorm() + p.w2.squaredNorm());
    CHECK(loss_mlp(refs, p, 0.02, w) ==
          doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("analytic gradients match central finite differences") {
  Rng rng(36);
  TraceBatch batch;
  for (int i = 0; i < 3; ++i) batch.push_back({random_emb(5, 4, rng), i % 2});
  TraceBatchRefs refs;
  for (auto& ex : batch) refs.push_back(&ex);
  ClassWeights w = compute_class_weights(refs, true);

  MlpProbe mp = MlpProbe::init(4, 12, 77);
  MlpGrad mg;
  double err = max_fd_rel_error(
      mp, mg, refs, 0.01, w,
      [](const TraceBatchRefs& b, const MlpProbe& p, double l2,
         const ClassWeights& cw, MlpGrad* g) { return loss_mlp(b, p, l2, cw, g); },
      30, rng);
  CHECK(err < 1e-3);

  LstmProbe lp = LstmProbe::init(4, 10, 78);
  LstmGrad lg;
  err = max_fd_rel_error(
      lp, lg, refs, 0.01, w,
      [](const TraceBatchRefs& b, const LstmProbe& p, double l2,
         const ClassWeights& cw, LstmGrad* g) { return loss_lstm(b, p, l2, cw, g); },
      30, rng);
  CHECK(err < 1e-3);
}

TEST_CASE("loss decreases along the negative gradient") {
  Rng rng(37);
  TraceBatch batch;
  for (int i = 0; i < 4; ++i) batch.push_back({random_emb(6, 3, rng), i % 2});
  TraceBatchRefs refs;
  for (auto& ex : batch) refs.push_back(&ex);
  ClassWeights w = compute_class_weights(refs, true);

  for (int rep = 0; rep < 5; ++rep) {
    MlpProbe p = MlpProbe::init(3, 8, 400 + rep);
    MlpGrad g;
    double before = loss_mlp(refs, p, 0.01, w, &g);
    auto pv = p.views();
    auto gv = g.views();
    for (std::size_t i = 0; i < pv.size(); ++i)
      for (std::ptrdiff_t k = 0; k < pv[i].size; ++k)
        pv[i].data[k] -= 1e-4 * gv[i].data[k];
    CHECK(loss_mlp(refs, p, 0.01, w) < before);
  }
}

TEST_CASE("losses are bounded below by the L2 term") {
  Rng rng(38);
  TraceBatch batch;
  batch.push_back({random_emb(4, 3, rng), 1});
  batch.push_back({random_emb(4, 3, rng), 0});
  TraceBatchRefs refs = {&batch[0], &batch[1]};
  ClassWeights w;
  MlpProbe p = MlpProbe::init(3, 8, 5);
  const double l2 = 0.5;
  CHECK(loss_mlp(refs, p, l2, w) >=
        l2 * (p.w1.squaredNorm() + p.w2.squaredNorm()));
  LstmProbe lp = LstmProbe::init(3, 6, 6);
  CHECK(loss_lstm(refs, lp, l2, w) >=
        l2 * (lp.wx.squaredNorm() + lp.wh.squaredNorm() + lp.wy.squaredNorm()));
}

TEST_CASE("duplicating failures leaves the balanced loss unchanged") {
  Rng rng(39);
  TraceBatch base;
  base.push_back({random_emb(5, 3, rng), 0});
  base.push_back({random_emb(5, 3, rng), 0});
  base.push_back({random_emb(5, 3, rng), 1});
  TraceBatch dup = base;
  dup.push_back(base[2]);
  dup.push_back(base[2]);  // failure duplicated 3x total

  TraceBatchRefs base_refs, dup_refs;
  for (auto& ex : base) base_refs.push_back(&ex);
  for (auto& ex : dup) dup_refs.push_back(&ex);

  MlpProbe p = MlpProbe::init(3, 8, 9);
  const double a =
      loss_mlp(base_refs, p, 0.0, compute_class_weights(base_refs, true));
  const double b =
      loss_mlp(dup_refs, p, 0.0, compute_class_weights(dup_refs, true));
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("Adam first step moves a unit-gradient parameter by ~lr") {
  double theta = 0.0;
  double grad = 1.0;
  std::vector<TensorView> params = {{&theta, 1, false}};
  std::vector<TensorView> grads = {{&grad, 1, false}};
  TrainConfig cfg;
  cfg.learning_rate = 1e-3;
  Adam adam(params, cfg);
  adam.step(params, grads);
  CHECK(theta == doctest::Approx(-1e-3).epsilon(1e-6));
}

TEST_CASE("training is reproducible and learns a separable set") {
  Rng rng(40);
  TraceBatch batch;
  for (int i = 0; i < 16; ++i) {
    const int y = i % 2;
    Eigen::MatrixXd e(8, 3);
    for (long r = 0; r < 8; ++r)
      for (long c = 0; c < 3; ++c)
        e(r, c) = (y ? 1.0 : -1.0) + 0.3 * rng.normal();
    batch.push_back({e, y});
  }
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 3e-3;
  cfg.l2_weight = 1e-4;
  cfg.seed = 12;

  TrainResult a = train_probe(batch, ProbeKind::Mlp, cfg, 16);
  TrainResult b = train_probe(batch, ProbeKind::Mlp, cfg, 16);
  const MlpProbe& pa = std::get<MlpProbe>(a.probe);
  const MlpProbe& pb = std::get<MlpProbe>(b.probe);
  CHECK(pa.w1 == pb.w1);
  CHECK(pa.b1 == pb.b1);
  CHECK(pa.w2 == pb.w2);
  CHECK(pa.b2 == pb.b2);
  CHECK(a.final_loss < 0.1 * a.initial_loss);

  TrainResult c = train_probe(batch, ProbeKind::Lstm, cfg, 16);
  CHECK(c.final_loss < 0.1 * c.initial_loss);
}

TEST_CASE("training requires both classes") {
  TraceBatch batch;
  batch.push_back({Eigen::MatrixXd::Random(4, 2), 1});
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(train_probe(batch, ProbeKind::Mlp, cfg, 4), Error);
}

TEST_CASE("RND basics") {
  Rng rng(41);
  Eigen::MatrixXd bank = random_emb(20, 3, rng);

  // predictor copied from target: zero error everywhere
  RndModel m;
  m.target = RndNet::init(3, 8, 4, 1);
  m.predictor = m.target;
  for (int i = 0; i < 5; ++i)
    CHECK(m.error(random_emb(1, 3, rng).row(0).transpose()) ==
          doctest::Approx(0.0));

  // identical banks and a shared seed give a identically-zero score
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.learning_rate = 1e-3;
  cfg.seed = 5;
  RndPair pair = rnd_fit(bank, bank, cfg, 8, 4);
  for (int i = 0; i < 5; ++i)
    CHECK(pair.score(random_emb(1, 3, rng).row(0).transpose()) == 0.0);
}

TEST_CASE("RND score is positive off the success support") {
  Rng rng(42);
  Eigen::MatrixXd succ(60, 2), fail(60, 2);
  for (long i = 0; i < 60; ++i) {
    succ.row(i) << 3.0 + 0.2 * rng.normal(), 0.2 * rng.normal();
    fail.row(i) << -3.0 + 0.2 * rng.normal(), 0.2 * rng.normal();
  }
  TrainConfig cfg;
  cfg.epochs = 400;
  cfg.learning_rate = 3e-3;
  cfg.batch_rollouts = 64;
  cfg.seed = 6;
  RndPair pair = rnd_fit(succ, fail, cfg, 32, 8);
  // a point inside the failure bank support, far from successes
  CHECK(pair.score(Eigen::Vector2d(-3.0, 0.0)) > 0.0);
  CHECK(pair.score(Eigen::Vector2d(3.0, 0.0)) < 0.0);
}

}  // TEST_SUITE
