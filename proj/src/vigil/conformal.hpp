#ifndef VIGIL_CONFORMAL_HPP
#define VIGIL_CONFORMAL_HPP

#include <cstddef>
#include <optional>
#include <vector>

#include "vigil/scores.hpp"

namespace vigil {

// One-sided time-varying prediction band calibrated on successful rollouts:
// a trace is flagged at the first step where s_t > upper_t = mu_t + q * m_t.
struct ConformalBand {
  std::vector<double> mu;          // per-step calibration mean
  std::vector<double> modulation;  // per-step bandwidth m_t, floored > 0
  double q = 0.0;                  // conformal quantile (may be +inf)
  double alpha = 0.0;
  std::size_t horizon = 0;

  double upper(std::size_t t) const;  // steps past the horizon reuse the last
};

struct Detection {
  bool detected = false;
  std::optional<std::size_t> first_exceed_step;
  double relative_time = 1.0;  // (step+1)/T when detected, else 1
};

// Calibrates the band at significance alpha from successful-rollout traces.
// mu_t is the calibration mean; the modulation m_t is the largest deviation
// among the non-extreme traces (the ceil(alpha*n) traces with largest
// sup_t(s_t - mu_t) are set aside); q is the ceil((n+1)(1-alpha))-th smallest
// of the per-trace sup_t (s_t - mu_t)/m_t, or +inf when that index exceeds n.
ConformalBand fit_band(const std::vector<ScoreTrace>& calibration, double alpha,
                       std::size_t horizon);

Detection detect(const ConformalBand& band, const ScoreTrace& trace);
Detection detect(const ConformalBand& band, const std::vector<double>& values);

}  // namespace vigil

#endif
