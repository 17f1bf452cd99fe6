#include "csipred/wiener.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "csipred/csvio.hpp"

namespace csipred {

double AutocorrEstimate::at(std::size_t lag) const {
  if (lag >= values.size())
    throw std::out_of_range("autocorrelation lag " + std::to_string(lag) +
                            " beyond estimate (max " + std::to_string(max_lag()) + ")");
  return values[lag];
}

AutocorrEstimate estimate_autocorrelation(std::span<const double> series,
                                          std::size_t max_lag) {
  if (series.size() < 10 * std::max<std::size_t>(max_lag, 1)) {
    std::ostringstream ss;
    ss << "series of " << series.size() << " samples is too short for a reliable "
       << "autocorrelation estimate to lag " << max_lag << "; need at least "
       << 10 * std::max<std::size_t>(max_lag, 1);
    throw std::length_error(ss.str());
  }
  AutocorrEstimate est;
  est.n_samples = series.size();
  est.values.resize(max_lag + 1);
  const double inv_n = 1.0 / static_cast<double>(series.size());
  for (std::size_t m = 0; m <= max_lag; ++m) {
    double acc = 0.0;
    for (std::size_t n = 0; n + m < series.size(); ++n) acc += series[n] * series[n + m];
    est.values[m] = acc * inv_n;
  }
  return est;
}

AutocorrEstimate average_autocorrelation(const std::vector<AutocorrEstimate>& parts) {
  if (parts.empty()) throw std::invalid_argument("no autocorrelation estimates to average");
  AutocorrEstimate out;
  out.values.assign(parts.front().values.size(), 0.0);
  for (const auto& part : parts) {
    if (part.values.size() != out.values.size())
      throw std::invalid_argument("autocorrelation estimates cover different lags");
    for (std::size_t m = 0; m < out.values.size(); ++m)
      out.values[m] += part.values[m] * static_cast<double>(part.n_samples);
    out.n_samples += part.n_samples;
  }
  for (double& v : out.values) v /= static_cast<double>(out.n_samples);
  return out;
}

namespace {

// In-place lower-triangular Cholesky of a dense n x n symmetric matrix.
bool cholesky(std::vector<double>& a, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double sum = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) sum -= a[i * n + k] * a[j * n + k];
      if (i == j) {
        if (!(sum > 0.0)) return false;
        a[i * n + i] = std::sqrt(sum);
      } else {
        a[i * n + j] = sum / a[j * n + j];
      }
    }
  }
  return true;
}

void cholesky_solve(const std::vector<double>& l, std::size_t n, std::vector<double>& x) {
  for (std::size_t i = 0; i < n; ++i) {
    double sum = x[i];
    for (std::size_t k = 0; k < i; ++k) sum -= l[i * n + k] * x[k];
    x[i] = sum / l[i * n + i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double sum = x[ii];
    for (std::size_t k = ii + 1; k < n; ++k) sum -= l[k * n + ii] * x[k];
    x[ii] = sum / l[ii * n + ii];
  }
}

}  // namespace

WienerBank build_filter_bank(const AutocorrEstimate& autocorr, std::size_t p,
                             std::size_t t_csi, std::size_t n_horizons) {
  if (p < 1) throw std::invalid_argument("filter order p must be >= 1");
  if (t_csi < 1) throw std::invalid_argument("t_csi must be >= 1");
  if (n_horizons == 0) {
    if (t_csi < 2)
      throw std::invalid_argument("t_csi < 2 needs an explicit horizon count");
    n_horizons = t_csi - 1;
  }
  const std::size_t need = t_csi * (p - 1) + n_horizons;
  if (autocorr.max_lag() < need)
    throw std::invalid_argument("autocorrelation covers lag " +
                                std::to_string(autocorr.max_lag()) + " but lag " +
                                std::to_string(need) + " is required");

  WienerBank bank;
  bank.p = p;
  bank.t_csi = t_csi;
  bank.n_horizons = n_horizons;
  bank.coefficients.resize(n_horizons * p);
  bank.analytic_mmse.resize(n_horizons);

  const double r0 = autocorr.at(0);
  std::vector<double> base(p * p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j)
      base[i * p + j] = autocorr.at(t_csi * (i >= j ? i - j : j - i));

  // Factor once; retry with escalating diagonal loading if not PD.
  std::vector<double> factor;
  double load = 0.0;
  for (int attempt = 0;; ++attempt) {
    factor = base;
    if (load > 0.0)
      for (std::size_t i = 0; i < p; ++i) factor[i * p + i] += load;
    if (cholesky(factor, p)) break;
    if (attempt >= 8)
      throw std::runtime_error("Wiener normal matrix is numerically singular");
    load = (load == 0.0) ? 1e-8 * std::max(r0, 1e-300) : load * 10.0;
    bank.regularized = true;
  }

  std::vector<double> rhs(p);
  for (std::size_t tau = 1; tau <= n_horizons; ++tau) {
    for (std::size_t i = 0; i < p; ++i) rhs[i] = autocorr.at(t_csi * i + tau);
    const std::vector<double> r_tau = rhs;
    cholesky_solve(factor, p, rhs);
    double reduction = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      bank.coefficients[(tau - 1) * p + i] = rhs[i];
      reduction += r_tau[i] * rhs[i];
    }
    bank.analytic_mmse[tau - 1] = std::max(r0 - reduction, 0.0);
  }
  return bank;
}

std::vector<double> wiener_predict(const WienerBank& bank, std::span<const double> window) {
  if (window.size() != bank.p)
    throw std::domain_error("window length " + std::to_string(window.size()) +
                            " does not match filter order " + std::to_string(bank.p));
  std::vector<double> out(bank.n_horizons);
  for (std::size_t tau = 1; tau <= bank.n_horizons; ++tau) {
    double acc = 0.0;
    const double* a = bank.coefficients.data() + (tau - 1) * bank.p;
    for (std::size_t i = 0; i < bank.p; ++i) acc += a[i] * window[i];
    out[tau - 1] = acc;
  }
  return out;
}

double wiener_predict_at(const WienerBank& bank, std::span<const double> window,
                         std::size_t tau) {
  if (window.size() != bank.p) throw std::domain_error("window/filter order mismatch");
  if (tau < 1 || tau > bank.n_horizons) throw std::domain_error("horizon out of range");
  double acc = 0.0;
  const double* a = bank.coefficients.data() + (tau - 1) * bank.p;
  for (std::size_t i = 0; i < bank.p; ++i) acc += a[i] * window[i];
  return acc;
}

void save_wiener_bank(const WienerBank& bank, const std::string& path) {
  std::string out = "csipred-wiener-bank v1\n";
  out += "p " + std::to_string(bank.p) + "\n";
  out += "t_csi " + std::to_string(bank.t_csi) + "\n";
  out += "horizons " + std::to_string(bank.n_horizons) + "\n";
  out += std::string("regularized ") + (bank.regularized ? "1" : "0") + "\n";
  for (std::size_t tau = 1; tau <= bank.n_horizons; ++tau) {
    out += "tau " + std::to_string(tau);
    for (double c : bank.row(tau)) out += " " + format_double(c);
    out += " mmse " + format_double(bank.analytic_mmse[tau - 1]) + "\n";
  }
  write_file_atomic(path, out);
}

WienerBank load_wiener_bank(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string header;
  std::getline(in, header);
  if (header != "csipred-wiener-bank v1")
    throw std::runtime_error("not a Wiener bank file: " + path);

  WienerBank bank;
  std::string key;
  int regularized = 0;
  in >> key >> bank.p;
  if (key != "p") throw std::runtime_error("malformed Wiener bank file: " + path);
  in >> key >> bank.t_csi;
  if (key != "t_csi") throw std::runtime_error("malformed Wiener bank file: " + path);
  in >> key >> bank.n_horizons;
  if (key != "horizons") throw std::runtime_error("malformed Wiener bank file: " + path);
  in >> key >> regularized;
  if (key != "regularized") throw std::runtime_error("malformed Wiener bank file: " + path);
  bank.regularized = regularized != 0;

  bank.coefficients.resize(bank.n_horizons * bank.p);
  bank.analytic_mmse.resize(bank.n_horizons);
  for (std::size_t tau = 1; tau <= bank.n_horizons; ++tau) {
    std::size_t tau_read = 0;
    in >> key >> tau_read;
    if (key != "tau" || tau_read != tau)
      throw std::runtime_error("malformed Wiener bank row in " + path);
    for (std::size_t i = 0; i < bank.p; ++i) in >> bank.coefficients[(tau - 1) * bank.p + i];
    in >> key >> bank.analytic_mmse[tau - 1];
    if (key != "mmse") throw std::runtime_error("malformed Wiener bank row in " + path);
  }
  if (!in) throw std::runtime_error("truncated Wiener bank file: " + path);
  return bank;
}

}  // namespace csipred
