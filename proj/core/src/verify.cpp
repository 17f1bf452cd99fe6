#include "csipred/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>

#include "csipred/channel.hpp"
#include "csipred/eesm.hpp"
#include "csipred/neural.hpp"
#include "csipred/predictor.hpp"
#include "csipred/wiener.hpp"

namespace csipred {

namespace {

std::vector<double> ar1_series(double rho, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, std::sqrt(1.0 - rho * rho));
  std::vector<double> x(n);
  std::normal_distribution<double> start(0.0, 1.0);
  x[0] = start(rng);
  for (std::size_t i = 1; i < n; ++i) x[i] = rho * x[i - 1] + noise(rng);
  return x;
}

CheckResult check_bessel_autocorrelation() {
  CheckResult res{"jakes-autocorrelation-vs-bessel", true, ""};
  const double doppler = 10.0, slot = 1e-3;
  const std::size_t n = 200000;
  const auto g = generate_tap_process(doppler, n, slot, 0.0, 20240601);

  std::ostringstream detail;
  for (std::size_t lag : {1ul, 8ul, 32ul}) {
    std::complex<double> acc{0.0, 0.0};
    double power = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) {
      acc += g[i] * std::conj(g[i + lag]);
      power += std::norm(g[i]);
    }
    const double emp = (acc / static_cast<double>(n - lag)).real() /
                       (power / static_cast<double>(n - lag));
    const double ref = std::cyl_bessel_j(0.0, 2.0 * std::numbers::pi * doppler * slot *
                                                  static_cast<double>(lag));
    detail << "lag " << lag << ": emp " << emp << " vs J0 " << ref << "; ";
    if (std::abs(emp - ref) > 0.05) res.pass = false;
  }
  res.detail = detail.str();
  return res;
}

CheckResult check_eesm_brute_force() {
  CheckResult res{"eesm-brute-force-and-properties", true, ""};
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> unif(0.1, 60.0);
  std::uniform_real_distribution<double> beta_dist(0.5, 25.0);

  double worst = 0.0;
  for (int trial = 0; trial < 200 && res.pass; ++trial) {
    std::vector<double> grid(24);
    for (double& v : grid) v = unif(rng);
    const double beta = beta_dist(rng);

    // Direct (unshifted) evaluation in long double as the oracle.
    long double acc = 0.0L;
    for (double v : grid) acc += std::exp(-static_cast<long double>(v) / beta);
    const double direct = static_cast<double>(
        -static_cast<long double>(beta) * std::log(acc / static_cast<long double>(grid.size())));
    const double got = eesm_compress(grid, beta);
    worst = std::max(worst, std::abs(got - direct) / std::abs(direct));
    if (std::abs(got - direct) > 1e-9 * std::abs(direct)) {
      res.pass = false;
      res.detail = "shifted vs direct evaluation differ";
    }

    const double lo = *std::min_element(grid.begin(), grid.end());
    const double hi = *std::max_element(grid.begin(), grid.end());
    if (got < lo - 1e-12 || got > hi + 1e-12) {
      res.pass = false;
      res.detail = "output escaped the [min, max] envelope";
    }

    // Monotonicity under a single-entry increase.
    std::vector<double> bumped = grid;
    bumped[static_cast<std::size_t>(trial) % bumped.size()] += 1.0;
    if (eesm_compress(bumped, beta) < got - 1e-12) {
      res.pass = false;
      res.detail = "raising one SINR lowered the effective SINR";
    }
  }

  const std::vector<double> uniform(17, 4.2);
  if (std::abs(eesm_compress(uniform, 3.7) - 4.2) > 1e-9 * 4.2) {
    res.pass = false;
    res.detail = "uniform-grid identity violated";
  }
  const std::vector<double> pair = {1.0, 3.0};
  if (std::abs(eesm_compress(pair, 1e6) - 2.0) > 1e-4) {
    res.pass = false;
    res.detail = "large-beta arithmetic-mean limit violated";
  }
  if (res.pass) {
    std::ostringstream d;
    d << "200 random grids, worst relative deviation " << worst;
    res.detail = d.str();
  }
  return res;
}

CheckResult check_ar1_wiener() {
  CheckResult res{"ar1-wiener-closed-form", true, ""};
  const double rho = 0.9;

  // Analytic autocorrelation: bank must reproduce a = rho^tau exactly.
  AutocorrEstimate analytic;
  analytic.n_samples = 1;
  for (std::size_t m = 0; m <= 40; ++m) analytic.values.push_back(std::pow(rho, m));
  const WienerBank bank = build_filter_bank(analytic, 1, 1, 4);
  std::ostringstream detail;
  for (std::size_t tau = 1; tau <= 4; ++tau) {
    const double expect_mmse = 1.0 - std::pow(rho, 2.0 * static_cast<double>(tau));
    if (std::abs(bank.analytic_mmse[tau - 1] - expect_mmse) > 1e-9) {
      res.pass = false;
      res.detail = "analytic MMSE does not match 1 - rho^(2 tau)";
      return res;
    }
  }

  // Empirical: estimated autocorrelation + held-out MSE within 5%.
  const auto series = ar1_series(rho, 200000, 99);
  const auto est = estimate_autocorrelation(series, 40);
  const WienerBank emp_bank = build_filter_bank(est, 4, 5, 4);
  PredictorSpec spec;
  spec.kind = PredictorKind::wiener;
  spec.input_len = 4;
  spec.t_csi = 5;
  const auto held = ar1_series(rho, 200000, 100);
  const PredictionBatch batch = build_windows(held, spec);
  for (std::size_t tau : {1ul, 2ul, 4ul}) {
    double mse = 0.0;
    for (std::size_t r = 0; r < batch.n_windows(); ++r) {
      const double pred = wiener_predict_at(emp_bank, batch.input_row(r), tau);
      const double err = batch.tdd_target_row(r)[tau - 1] - pred;
      mse += err * err;
    }
    mse /= static_cast<double>(batch.n_windows());
    const double expect = 1.0 - std::pow(rho, 2.0 * static_cast<double>(tau));
    detail << "tau " << tau << ": emp " << mse << " vs " << expect << "; ";
    if (std::abs(mse - expect) > 0.05 * expect) res.pass = false;
  }
  res.detail = detail.str();
  return res;
}

CheckResult check_zoh_limit() {
  CheckResult res{"zoh-error-power-limit", true, ""};
  const double rho = 0.9;
  const auto series = ar1_series(rho, 200000, 4242);
  const std::size_t lag = 32;  // rho^32 ~ 0.034 < 0.05
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + lag < series.size(); ++i) {
    const double e = series[i + lag] - series[i];
    acc += e * e;
    ++count;
  }
  const double power = acc / static_cast<double>(count);
  std::ostringstream d;
  d << "error power " << power << " at lag " << lag;
  res.detail = d.str();
  res.pass = power > 1.8 && power < 2.2;
  return res;
}

CheckResult check_gradients(bool inject_bug) {
  CheckResult res{"finite-difference-gradients", true, ""};
  struct Case {
    PredictorKind kind;
    std::size_t p, d, out;
  };
  const std::vector<Case> cases = {{PredictorKind::dnn, 1, 1, 1},
                                   {PredictorKind::dnn, 3, 4, 3},
                                   {PredictorKind::gru, 3, 2, 2},
                                   {PredictorKind::lstm, 3, 2, 2}};
  double worst = 0.0;
  for (const Case& c : cases) {
    NeuralModel model = init_model(c.kind, c.p, c.d, c.out, 11 + c.p + c.d);
    std::mt19937_64 rng(55);
    std::normal_distribution<double> dist(0.0, 1.0);

    PredictionBatch batch;
    batch.input_len = c.p;
    batch.t_csi = c.out + 1;
    for (int r = 0; r < 3; ++r) {
      batch.slot_index.push_back(static_cast<std::size_t>(r));
      for (std::size_t i = 0; i < c.p; ++i) batch.inputs.push_back(dist(rng));
      for (std::size_t i = 0; i < c.out; ++i) batch.targets_tdd.push_back(dist(rng));
    }

    std::vector<double> grad = gradients(model, batch);
    if (inject_bug) grad[grad.size() / 2] += 0.05;

    const double h = 1e-5;
    for (std::size_t i = 0; i < model.n_params(); ++i) {
      NeuralModel plus = model, minus = model;
      plus.params[i] += h;
      minus.params[i] -= h;
      const double fd = (batch_loss(plus, batch) - batch_loss(minus, batch)) / (2.0 * h);
      const double rel = std::abs(grad[i] - fd) / std::max(1.0, std::abs(grad[i]));
      worst = std::max(worst, rel);
    }
  }
  std::ostringstream d;
  d << "worst relative error " << worst;
  res.detail = d.str();
  res.pass = worst < 1e-4;
  return res;
}

CheckResult check_lmmse_oracle() {
  CheckResult res{"lmmse-two-point-normal-equations", true, ""};
  const double rho = 0.9;
  auto autocorr = [rho](std::size_t lag) { return std::pow(rho, lag); };
  const std::vector<double> sparse = {1.0, 1.0};
  const auto dense = interpolate(sparse, 4, InterpMethod::lmmse, autocorr);
  // Hand solve at the midpoint (lag 2 to both samples):
  //   w = rho^2/(1+rho^4) [1, 1]; estimate = 2 rho^2 / (1 + rho^4).
  const double expect = 2.0 * std::pow(rho, 2) / (1.0 + std::pow(rho, 4));
  std::ostringstream d;
  d << "midpoint " << dense[2] << " vs " << expect;
  res.detail = d.str();
  res.pass = std::abs(dense[2] - expect) < 1e-12;
  return res;
}

CheckResult check_cqi_table(const std::string& path) {
  CheckResult res{"cqi-table-validation", true, ""};
  try {
    const CqiTable table = path.empty() ? default_cqi_table() : load_cqi_table(path);
    table.validate();
    res.detail = path.empty() ? "built-in table valid" : path + " valid";
  } catch (const std::exception& e) {
    res.pass = false;
    res.detail = e.what();
    return res;
  }
  // Self-test: a corrupted table (non-monotone beta) must be rejected.
  CqiTable bad = default_cqi_table();
  bad.entries[4].beta = bad.entries[3].beta;
  try {
    bad.validate();
    res.pass = false;
    res.detail = "corrupted table passed validation";
  } catch (const std::invalid_argument&) {
  }
  return res;
}

}  // namespace

std::vector<CheckResult> run_verification(const VerifyOptions& options) {
  std::vector<CheckResult> results;
  results.push_back(check_cqi_table(options.cqi_table_path));
  results.push_back(check_eesm_brute_force());
  results.push_back(check_lmmse_oracle());
  results.push_back(check_ar1_wiener());
  results.push_back(check_zoh_limit());
  results.push_back(check_gradients(options.inject_gradient_bug));
  results.push_back(check_bessel_autocorrelation());
  return results;
}

int report_verification(const std::vector<CheckResult>& results, std::ostream& out) {
  int failures = 0;
  for (const CheckResult& r : results) {
    out << (r.pass ? "[PASS] " : "[FAIL] ") << r.name;
    if (!r.detail.empty()) out << ": " << r.detail;
    out << "\n";
    if (!r.pass) ++failures;
  }
  out << (failures == 0 ? "all checks passed" : std::to_string(failures) + " check(s) failed")
      << "\n";
  return failures;
}

}  // namespace csipred
