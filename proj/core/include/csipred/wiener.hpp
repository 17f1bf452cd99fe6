// Linear MMSE prediction: empirical autocorrelation, Wiener-Hopf solves, a
// per-horizon filter bank and the analytic minimum-MSE evaluator.
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace csipred {

struct AutocorrEstimate {
  std::vector<double> values;  // R(0) .. R(max_lag)
  std::size_t n_samples = 0;

  std::size_t max_lag() const { return values.empty() ? 0 : values.size() - 1; }
  double at(std::size_t lag) const;
};

// Biased estimator R(m) = (1/N) sum x(n) x(n+m); biased so the implied
// Toeplitz matrices stay positive semidefinite. The series is assumed
// zero-mean (standardized upstream). Throws std::length_error when the series
// is shorter than 10 * max_lag.
AutocorrEstimate estimate_autocorrelation(std::span<const double> series,
                                          std::size_t max_lag);

// Sample-count weighted average of per-segment estimates; used when a single
// filter must serve pooled (e.g. mixed-Doppler) training data.
AutocorrEstimate average_autocorrelation(const std::vector<AutocorrEstimate>& parts);

// Bank of per-horizon filters a_tau solving R a_tau = r_tau with
// [R]_{i,j} = R(t_csi*(i-j)) and [r_tau]_i = R(t_csi*i + tau), both on the
// window ordering (most recent first). analytic_mmse[tau-1] is
// R(0) - r_tau' a_tau.
struct WienerBank {
  std::size_t p = 0;
  std::size_t t_csi = 0;
  std::size_t n_horizons = 0;
  std::vector<double> coefficients;  // [n_horizons x p], row tau-1
  std::vector<double> analytic_mmse; // [n_horizons]
  bool regularized = false;          // diagonal loading was required

  std::span<const double> row(std::size_t tau) const {
    return {coefficients.data() + (tau - 1) * p, p};
  }
};

// n_horizons = 0 defaults to t_csi - 1. The autocorrelation must cover lag
// t_csi*(p-1) + n_horizons. A singular normal matrix is retried with diagonal
// loading 1e-8 * R(0) (escalated if needed) and flagged in the result.
WienerBank build_filter_bank(const AutocorrEstimate& autocorr, std::size_t p,
                             std::size_t t_csi, std::size_t n_horizons = 0);

// All-horizon prediction a_tau' x for a window in batch ordering.
std::vector<double> wiener_predict(const WienerBank& bank, std::span<const double> window);
double wiener_predict_at(const WienerBank& bank, std::span<const double> window,
                         std::size_t tau);

// Text round-trip for audit and cross-language comparison.
void save_wiener_bank(const WienerBank& bank, const std::string& path);
WienerBank load_wiener_bank(const std::string& path);

}  // namespace csipred
