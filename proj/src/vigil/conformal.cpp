#include "vigil/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vigil/error.hpp"

namespace vigil {

double ConformalBand::upper(std::size_t t) const {
  require(!mu.empty(), ErrorCode::InvalidArgument, "band has no support");
  std::size_t i = std::min(t, mu.size() - 1);
  return mu[i] + q * modulation[i];
}

ConformalBand fit_band(const std::vector<ScoreTrace>& calibration, double alpha,
                       std::size_t horizon) {
  require(alpha > 0.0 && alpha < 1.0, ErrorCode::InvalidArgument,
          "alpha must lie in (0,1)");
  require(!calibration.empty(), ErrorCode::InvalidArgument,
          "empty calibration set");
  require(horizon >= 1, ErrorCode::InvalidArgument, "horizon must be >= 1");
  const std::size_t n = calibration.size();
  for (const ScoreTrace& tr : calibration) {
    require(!tr.values.empty(), ErrorCode::InvalidArgument,
            "calibration trace with no values");
    for (double v : tr.values)
      require(std::isfinite(v), ErrorCode::Numeric,
              "non-finite calibration score");
  }

  const std::size_t n_extreme =
      static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n)));
  // a step counts as well supported while enough traces reach it; shorter
  // calibration sets degrade to requiring a single trace
  const std::size_t need =
      std::max<std::size_t>(1, std::min(n, std::max<std::size_t>(2, n_extreme + 1)));

  ConformalBand band;
  band.alpha = alpha;
  band.horizon = horizon;
  band.mu.resize(horizon);
  band.modulation.resize(horizon);

  std::vector<std::size_t> reach(horizon, 0);
  for (const ScoreTrace& tr : calibration)
    for (std::size_t t = 0; t < tr.values.size() && t < horizon; ++t)
      ++reach[t];

  // mu_t: mean over traces reaching t; unsupported steps reuse the last
  // supported step's value (reach[0] == n, so step 0 is always supported)
  std::size_t last_ok = 0;
  for (std::size_t t = 0; t < horizon; ++t) {
    if (reach[t] >= need) {
      double sum = 0.0;
      for (const ScoreTrace& tr : calibration)
        if (t < tr.values.size()) sum += tr.values[t];
      band.mu[t] = sum / static_cast<double>(reach[t]);
      last_ok = t;
    } else {
      band.mu[t] = band.mu[last_ok];
    }
  }

  // extreme set: the ceil(alpha*n) traces with largest sup_t (s_t - mu_t)
  std::vector<double> sup_dev(n, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = calibration[i].values;
    for (std::size_t t = 0; t < v.size() && t < horizon; ++t)
      sup_dev[i] = std::max(sup_dev[i], v[t] - band.mu[t]);
  }
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sup_dev[a] > sup_dev[b];
  });
  std::vector<bool> extreme(n, false);
  for (std::size_t r = 0; r < std::min(n_extreme, n); ++r)
    extreme[order[r]] = true;

  // m_t: largest deviation among non-extreme traces reaching t, floored away
  // from zero; unsupported steps reuse the last supported value
  last_ok = 0;
  for (std::size_t t = 0; t < horizon; ++t) {
    const double floor_m = 1e-8 * (1.0 + std::abs(band.mu[t]));
    if (reach[t] >= need || t == 0) {
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (extreme[i] || t >= calibration[i].values.size()) continue;
        m = std::max(m, std::abs(calibration[i].values[t] - band.mu[t]));
      }
      band.modulation[t] = std::max(m, floor_m);
      if (reach[t] >= need) last_ok = t;
    } else {
      band.modulation[t] = band.modulation[last_ok];
    }
  }

  // conformity scores over all n traces
  std::vector<double> r(n, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    const auto& v = calibration[i].values;
    for (std::size_t t = 0; t < v.size() && t < horizon; ++t)
      r[i] = std::max(r[i], (v[t] - band.mu[t]) / band.modulation[t]);
  }
  std::sort(r.begin(), r.end());
  const std::size_t q_index = static_cast<std::size_t>(
      std::ceil((static_cast<double>(n) + 1.0) * (1.0 - alpha)));
  if (q_index > n)
    band.q = std::numeric_limits<double>::infinity();
  else
    band.q = r[q_index - 1];
  return band;
}

Detection detect(const ConformalBand& band, const std::vector<double>& values) {
  Detection det;
  const double t_total = static_cast<double>(values.size());
  for (std::size_t t = 0; t < values.size(); ++t) {
    if (values[t] > band.upper(t)) {
      det.detected = true;
      det.first_exceed_step = t;
      det.relative_time = (static_cast<double>(t) + 1.0) / t_total;
      return det;
    }
  }
  det.relative_time = 1.0;
  return det;
}

Detection detect(const ConformalBand& band, const ScoreTrace& trace) {
  return detect(band, trace.values);
}

}  // namespace vigil
