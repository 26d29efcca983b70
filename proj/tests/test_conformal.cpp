#include <doctest.h>

#include <cmath>
#include <limits>

#include "vigil/conformal.hpp"
#include "vigil/error.hpp"
#include "vigil/io.hpp"
#include "vigil/rng.hpp"

using namespace vigil;

namespace {

ScoreTrace trace(std::vector<double> values, const std::string& id = "r") {
  ScoreTrace t;
  t.rollout_id = id;
  t.values = std::move(values);
  return t;
}

std::vector<ScoreTrace> iid_gaussian_traces(int n, int len, Rng& rng) {
  std::vector<ScoreTrace> out;
  for (int i = 0; i < n; ++i) {
    std::vector<double> v(static_cast<std::size_t>(len));
    for (double& x : v) x = rng.normal();
    out.push_back(trace(std::move(v), "t" + std::to_string(i)));
  }
  return out;
}

}  // namespace

TEST_SUITE("conformal") {

TEST_CASE("constant calibration collapses to the constant") {
  std::vector<ScoreTrace> calib;
  for (int i = 0; i < 10; ++i) calib.push_back(trace({2, 2, 2, 2}));
  ConformalBand band = fit_band(calib, 0.2, 4);
  for (std::size_t t = 0; t < 4; ++t)
    CHECK(band.upper(t) == doctest::Approx(2.0).epsilon(1e-12));

  // a trace nudged above the band fires at its first such step
  const double eta = 1e-6;
  Detection det = detect(band, trace({2, 2, 2 + band.q * 3e-8 + eta, 2}));
  CHECK(det.detected);
  CHECK(*det.first_exceed_step == 2);
  // exactly on the band never fires (strict inequality)
  CHECK_FALSE(detect(band, trace({2, 2, 2, 2})).detected);
}

TEST_CASE("quantile index at n=19, alpha=0.05 picks the largest score") {
  std::vector<ScoreTrace> calib;
  for (int i = 0; i < 19; ++i)
    calib.push_back(trace({static_cast<double>(i)}));
  ConformalBand band = fit_band(calib, 0.05, 1);
  // the largest conformity radius corresponds to the largest trace value
  double max_r = -1e300;
  for (const ScoreTrace& tr : calib)
    max_r = std::max(max_r, (tr.values[0] - band.mu[0]) / band.modulation[0]);
  CHECK(band.q == doctest::Approx(max_r));
}

TEST_CASE("band is vacuous when calibration is too small") {
  std::vector<ScoreTrace> calib;
  for (int i = 0; i < 3; ++i) calib.push_back(trace({1.0, 2.0}));
  ConformalBand band = fit_band(calib, 0.1, 2);  // needs n >= 9
  CHECK(std::isinf(band.q));
  CHECK_FALSE(detect(band, trace({1e300, 1e300})).detected);
}

TEST_CASE("detection basics") {
  std::vector<ScoreTrace> calib;
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    std::vector<double> v(10);
    for (double& x : v) x = rng.normal();
    calib.push_back(trace(std::move(v)));
  }
  ConformalBand band = fit_band(calib, 0.1, 10);

  // trace equal to the mean never fires
  CHECK_FALSE(detect(band, trace(band.mu)).detected);

  // jump above the band only at step 0
  std::vector<double> v = band.mu;
  v[0] = band.upper(0) + 1.0;
  Detection det = detect(band, trace(v));
  CHECK(det.detected);
  CHECK(*det.first_exceed_step == 0);
  CHECK(det.relative_time == doctest::Approx(0.1));

  // ramping trace: first crossing equals an exhaustive scan
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> w(10);
    for (std::size_t t = 0; t < 10; ++t)
      w[t] = 0.4 * static_cast<double>(t) * rng.uniform() - 1.0;
    Detection d = detect(band, trace(w));
    std::size_t scan = w.size();
    for (std::size_t t = 0; t < w.size(); ++t)
      if (w[t] > band.upper(t)) {
        scan = t;
        break;
      }
    if (scan == w.size()) {
      CHECK_FALSE(d.detected);
      CHECK(d.relative_time == 1.0);
    } else {
      CHECK(d.detected);
      CHECK(*d.first_exceed_step == scan);
      CHECK(d.relative_time ==
            doctest::Approx((scan + 1.0) / static_cast<double>(w.size())));
    }
  }
}

TEST_CASE("traces beyond the horizon reuse the last band value") {
  std::vector<ScoreTrace> calib;
  for (int i = 0; i < 20; ++i)
    calib.push_back(trace({0.0, 1.0, 2.0}));
  ConformalBand band = fit_band(calib, 0.25, 3);
  std::vector<double> v = {0, 1, 2, 2, band.upper(2) + 1.0};
  Detection det = detect(band, trace(v));
  CHECK(det.detected);
  CHECK(*det.first_exceed_step == 4);
}

TEST_CASE("ragged calibration falls back to well-supported steps") {
  std::vector<ScoreTrace> calib;
  for (int i = 0; i < 20; ++i) calib.push_back(trace({1.0, 1.0, 1.0, 1.0}));
  calib.push_back(trace({1.0, 1.0, 1.0, 1.0, 50.0}));  // lone long trace
  ConformalBand band = fit_band(calib, 0.2, 5);
  // step 4 is supported by one trace only -> reuses step 3's mu
  CHECK(band.mu[4] == doctest::Approx(band.mu[3]));
}

TEST_CASE("raising alpha never raises the quantile") {
  Rng rng(2);
  std::vector<ScoreTrace> calib = iid_gaussian_traces(60, 8, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double alpha : {0.05, 0.1, 0.2, 0.4}) {
    ConformalBand band = fit_band(calib, alpha, 8);
    CHECK(band.q <= prev);
    prev = band.q;
  }
}

TEST_CASE("empirical false positive rate respects alpha") {
  Rng rng(3);
  std::vector<ScoreTrace> calib = iid_gaussian_traces(100, 20, rng);
  ConformalBand band = fit_band(calib, 0.1, 20);
  int fired = 0;
  const int n_test = 1000;
  for (int i = 0; i < n_test; ++i) {
    std::vector<double> v(20);
    for (double& x : v) x = rng.normal();
    if (detect(band, trace(std::move(v))).detected) ++fired;
  }
  CHECK(static_cast<double>(fired) / n_test <= 0.13);
}

TEST_CASE("band round-trips through its file format") {
  Rng rng(4);
  std::vector<ScoreTrace> calib = iid_gaussian_traces(30, 6, rng);
  ConformalBand band = fit_band(calib, 0.15, 6);
  ConformalBand back = band_from_json_text(band_to_json_text(band));
  CHECK(back.alpha == band.alpha);
  CHECK(back.horizon == band.horizon);
  CHECK(back.q == band.q);
  CHECK(back.mu == band.mu);
  CHECK(back.modulation == band.modulation);

  band.q = std::numeric_limits<double>::infinity();
  ConformalBand inf_back = band_from_json_text(band_to_json_text(band));
  CHECK(std::isinf(inf_back.q));
}

TEST_CASE("fit_band validates inputs") {
  std::vector<ScoreTrace> calib = {trace({1.0})};
  CHECK_THROWS_AS(fit_band({}, 0.1, 5), Error);
  CHECK_THROWS_AS(fit_band(calib, 0.0, 5), Error);
  CHECK_THROWS_AS(fit_band(calib, 1.0, 5), Error);
  std::vector<ScoreTrace> bad = {trace({std::nan("")})};
  CHECK_THROWS_AS(fit_band(bad, 0.1, 1), Error);
}

}  // TEST_SUITE
