#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <random>

#include "csipred/predictor.hpp"
#include "csipred/wiener.hpp"

using namespace csipred;

namespace {

std::vector<double> ar1(double rho, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> innov(0.0, std::sqrt(1.0 - rho * rho));
  std::normal_distribution<double> start(0.0, 1.0);
  std::vector<double> x(n);
  x[0] = start(rng);
  for (std::size_t i = 1; i < n; ++i) x[i] = rho * x[i - 1] + innov(rng);
  return x;
}

std::vector<double> white(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> x(n);
  for (double& v : x) v = dist(rng);
  return x;
}

}  // namespace

TEST_CASE("autocorrelation of white noise") {
  const auto x = white(1000000, 2);
  const auto est = estimate_autocorrelation(x, 8);
  CHECK(est.at(0) == doctest::Approx(1.0).epsilon(0.01));
  for (std::size_t m = 1; m <= 8; ++m) CHECK(std::abs(est.at(m)) < 0.01);
}

TEST_CASE("autocorrelation of an AR(1) process") {
  const auto x = ar1(0.9, 1000000, 3);
  const auto est = estimate_autocorrelation(x, 8);
  for (std::size_t m = 0; m <= 8; ++m)
    CHECK(std::abs(est.at(m) - std::pow(0.9, m)) < 0.02);
}

TEST_CASE("constant series autocorrelation is flat (up to the biased taper)") {
  const std::vector<double> x(100000, 1.7);
  const auto est = estimate_autocorrelation(x, 8);
  for (std::size_t m = 0; m <= 8; ++m)
    CHECK(est.at(m) == doctest::Approx(est.at(0)).epsilon(1e-3));
}

TEST_CASE("autocorrelation sizing error") {
  const auto x = white(99, 4);
  CHECK_THROWS_AS(static_cast<void>(estimate_autocorrelation(x, 10)), std::length_error);
  CHECK_NOTHROW(static_cast<void>(estimate_autocorrelation(white(100, 4), 10)));
}

TEST_CASE("white process gives a zero filter with unit MMSE") {
  AutocorrEstimate ac;
  ac.n_samples = 1000;
  ac.values.assign(40, 0.0);
  ac.values[0] = 1.0;
  const auto bank = build_filter_bank(ac, 4, 5);
  for (std::size_t tau = 1; tau <= 4; ++tau) {
    for (double c : bank.row(tau)) CHECK(std::abs(c) < 1e-12);
    CHECK(bank.analytic_mmse[tau - 1] == doctest::Approx(1.0));
  }
}

TEST_CASE("AR(1) closed form: single-tap filter at horizon 2") {
  AutocorrEstimate ac;
  ac.n_samples = 1;
  for (std::size_t m = 0; m <= 8; ++m) ac.values.push_back(std::pow(0.9, m));
  const auto bank = build_filter_bank(ac, 1, 1, 2);
  CHECK(bank.row(2)[0] == doctest::Approx(0.81).epsilon(1e-12));
  CHECK(bank.analytic_mmse[1] == doctest::Approx(0.3439).epsilon(1e-9));
  // prediction continues the oracle
  const std::vector<double> window = {1.0};
  CHECK(wiener_predict_at(bank, window, 2) == doctest::Approx(0.81));
}

TEST_CASE("analytic MMSE never exceeds the signal variance") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> rho_dist(0.1, 0.97);
  std::uniform_real_distribution<double> w_dist(0.0, 1.5);
  for (int trial = 0; trial < 100; ++trial) {
    // Damped-cosine mixtures are valid PSD autocorrelation sequences.
    const double r1 = rho_dist(rng), r2 = rho_dist(rng);
    const double w1 = w_dist(rng), w2 = w_dist(rng);
    const double a = rho_dist(rng);
    AutocorrEstimate ac;
    ac.n_samples = 1;
    for (std::size_t m = 0; m <= 60; ++m)
      ac.values.push_back(a * std::pow(r1, m) * std::cos(w1 * m) +
                          (1.0 - a) * std::pow(r2, m) * std::cos(w2 * m));
    const auto bank = build_filter_bank(ac, 4, 5);
    for (double v : bank.analytic_mmse) {
      CHECK(v >= 0.0);
      CHECK(v <= ac.at(0) + 1e-9);
    }
  }
}

TEST_CASE("solver residual is tiny for well-conditioned systems") {
  const auto x = ar1(0.8, 200000, 7);
  const auto ac = estimate_autocorrelation(x, 30);
  const std::size_t p = 5, t_csi = 3;
  const auto bank = build_filter_bank(ac, p, t_csi);
  for (std::size_t tau = 1; tau <= bank.n_horizons; ++tau) {
    const auto a = bank.row(tau);
    double norm = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      double resid = -ac.at(t_csi * i + tau);
      for (std::size_t j = 0; j < p; ++j)
        resid += ac.at(t_csi * (i >= j ? i - j : j - i)) * a[j];
      norm += resid * resid;
    }
    CHECK(std::sqrt(norm) < 1e-9);
  }
}

TEST_CASE("near-singular systems get diagonal loading instead of failing") {
  AutocorrEstimate ac;
  ac.n_samples = 1000;
  ac.values.assign(20, 1.0);  // perfectly correlated process
  const auto bank = build_filter_bank(ac, 3, 2);
  CHECK(bank.regularized);
  for (double v : bank.analytic_mmse) CHECK(std::isfinite(v));
}

TEST_CASE("prediction is linear and respects the window ordering") {
  WienerBank bank;
  bank.p = 3;
  bank.t_csi = 4;
  bank.n_horizons = 3;
  bank.coefficients = {1.0, 0.0, 0.0,   // tau 1: ZOH row
                       0.0, 1.0, 0.0,   // tau 2: second-newest
                       0.5, 0.5, 0.0};  // tau 3: average
  bank.analytic_mmse = {0.0, 0.0, 0.0};

  const std::vector<double> zero(3, 0.0);
  for (double v : wiener_predict(bank, zero)) CHECK(v == 0.0);

  const std::vector<double> window = {0.7, -0.2, 0.1};
  const auto pred = wiener_predict(bank, window);
  CHECK(pred[0] == doctest::Approx(0.7));  // identity row recovers ZOH
  CHECK(pred[1] == doctest::Approx(-0.2));
  CHECK(pred[2] == doctest::Approx(0.25));
  const std::span<const double> short_window(window.data(), 2);
  CHECK_THROWS_AS(static_cast<void>(wiener_predict(bank, short_window)), std::domain_error);
}

TEST_CASE("orthogonality, MMSE consistency and ZOH dominance on AR(1)") {
  const double rho = 0.9;
  const std::size_t p = 4, t_csi = 2;
  const auto train_series = ar1(rho, 300000, 11);
  const auto ac = estimate_autocorrelation(train_series, t_csi * (p - 1) + t_csi);
  const auto bank = build_filter_bank(ac, p, t_csi);

  PredictorSpec spec;
  spec.kind = PredictorKind::wiener;
  spec.input_len = p;
  spec.t_csi = t_csi;
  const auto held = ar1(rho, 220000, 12);
  const auto batch = build_windows(held, spec);
  REQUIRE(batch.n_windows() >= 100000);

  for (std::size_t tau = 1; tau < t_csi; ++tau) {
    double mse = 0.0, zoh_mse = 0.0;
    std::vector<double> ortho(p, 0.0);
    for (std::size_t r = 0; r < batch.n_windows(); ++r) {
      const auto window = batch.input_row(r);
      const double target = batch.tdd_target_row(r)[tau - 1];
      const double err = target - wiener_predict_at(bank, window, tau);
      const double zoh_err = target - window[0];
      mse += err * err;
      zoh_mse += zoh_err * zoh_err;
      for (std::size_t i = 0; i < p; ++i) ortho[i] += err * window[i];
    }
    const double n = static_cast<double>(batch.n_windows());
    mse /= n;
    zoh_mse /= n;
    // orthogonality principle
    for (std::size_t i = 0; i < p; ++i) CHECK(std::abs(ortho[i] / n) < 0.01);
    // empirical MSE tracks the analytic MMSE
    CHECK(mse == doctest::Approx(bank.analytic_mmse[tau - 1]).epsilon(0.05));
    // never worse than ZOH beyond 0.1 dB
    CHECK(10.0 * std::log10(mse) <= 10.0 * std::log10(zoh_mse) + 0.1);
  }
}

TEST_CASE("bank text serialization round trip") {
  const auto x = ar1(0.7, 50000, 15);
  const auto ac = estimate_autocorrelation(x, 20);
  const auto bank = build_filter_bank(ac, 4, 5);
  const std::string path = "bank_roundtrip.txt";
  save_wiener_bank(bank, path);
  const auto loaded = load_wiener_bank(path);
  CHECK(loaded.p == bank.p);
  CHECK(loaded.t_csi == bank.t_csi);
  CHECK(loaded.n_horizons == bank.n_horizons);
  CHECK(loaded.regularized == bank.regularized);
  CHECK(loaded.coefficients == bank.coefficients);
  CHECK(loaded.analytic_mmse == bank.analytic_mmse);
  std::remove(path.c_str());
}

TEST_CASE("averaged autocorrelation weights by sample count") {
  AutocorrEstimate a, b;
  a.n_samples = 100;
  a.values = {1.0, 0.5};
  b.n_samples = 300;
  b.values = {1.0, 0.1};
  const auto avg = average_autocorrelation({a, b});
  CHECK(avg.n_samples == 400);
  CHECK(avg.at(0) == doctest::Approx(1.0));
  CHECK(avg.at(1) == doctest::Approx((100 * 0.5 + 300 * 0.1) / 400.0));
}
