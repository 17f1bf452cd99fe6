#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "csipred/experiments.hpp"
#include "csipred/simulation.hpp"
#include "csipred/wiener.hpp"

using namespace csipred;

namespace {

ChannelConfig channel(double doppler, std::size_t n_slots, std::uint64_t seed,
                      const std::string& profile = "tdl-a") {
  ChannelConfig cfg;
  cfg.doppler_hz = doppler;
  cfg.n_slots = n_slots;
  cfg.profile = pdp_profile(profile);
  cfg.seed = seed;
  return cfg;
}

ChannelConfig static_channel(std::size_t n_slots) {
  ChannelConfig cfg;
  cfg.doppler_hz = 0.0;
  cfg.n_slots = n_slots;
  cfg.seed = 1;
  cfg.profile.name = "single";
  cfg.profile.taps = {{0.0, 1.0, 0.0}};
  return cfg;
}

}  // namespace

TEST_CASE("slot throughput formula") {
  const CqiTable table = default_cqi_table();
  std::vector<double> per_cqi(kNumCqi, 1.0);

  CHECK(slot_throughput(0, per_cqi, table, 52, 4, 1e-3) == 0.0);

  // CQI 15 far above its midpoint: BLER ~ 0, pure rate term.
  per_cqi[14] = std::pow(10.0, (table.entry(15).bler_mid_db + 40.0) / 10.0);
  const double ideal_rate = 5.5547 * 52 * 12 * 14 * 4 / 1e-3 / 1e6;
  CHECK(slot_throughput(15, per_cqi, table, 52, 4, 1e-3) ==
        doctest::Approx(ideal_rate).epsilon(1e-9));
  CHECK(ideal_rate == doctest::Approx(194.1034).epsilon(1e-4));

  // exactly at the midpoint: BLER = 0.5 halves the expected throughput.
  per_cqi[14] = std::pow(10.0, table.entry(15).bler_mid_db / 10.0);
  CHECK(slot_throughput(15, per_cqi, table, 52, 4, 1e-3) ==
        doctest::Approx(0.5 * ideal_rate).epsilon(1e-9));

  CHECK_THROWS_AS(slot_throughput(16, per_cqi, table, 52, 4, 1e-3), std::domain_error);
  CHECK_THROWS_AS(slot_throughput(-1, per_cqi, table, 52, 4, 1e-3), std::domain_error);
}

TEST_CASE("dataset splits are chronological with near-exact fractions") {
  const CqiTable table = default_cqi_table();
  PredictorSpec spec;
  spec.kind = PredictorKind::gru;
  spec.input_len = 4;
  spec.t_csi = 4;

  const TraceSet traces =
      build_traces({channel(20.0, 4200, 3), channel(40.0, 4200, 4)}, table, 0.784);
  const Dataset ds = make_dataset(traces, spec);
  CHECK(ds.provenance.size() == 2);

  // overall sizes within one window per config of the exact fractions
  const std::size_t total = ds.train.n_windows() + ds.val.n_windows() + ds.test.n_windows();
  CHECK(std::abs(static_cast<double>(ds.train.n_windows()) - 0.784 * total) <= 2.0);
  CHECK(std::abs(static_cast<double>(ds.val.n_windows()) - 0.196 * total) <= 2.0);
  CHECK(std::abs(static_cast<double>(ds.test.n_windows()) - 0.02 * total) <= 2.0);

  // windows never straddle config boundaries: slot indices restart per config
  std::size_t restarts = 0;
  for (std::size_t r = 1; r < ds.train.n_windows(); ++r)
    if (ds.train.slot_index[r] < ds.train.slot_index[r - 1]) ++restarts;
  CHECK(restarts == 1);  // exactly one boundary between the two configs

  // sizing error names the minimum slot count
  const TraceSet tiny = build_traces({channel(20.0, 8, 5)}, table, 0.784);
  CHECK_THROWS_AS(static_cast<void>(make_dataset(tiny, spec)), std::length_error);
}

TEST_CASE("per-horizon MSE evaluation") {
  SUBCASE("perfect predictions hit the -60 dB floor") {
    PredictionBatch batch;
    batch.input_len = 1;
    batch.t_csi = 2;
    batch.slot_index = {0, 1};
    batch.inputs = {0.5, -0.5};
    batch.targets_tdd = {0.5, -0.5};
    const auto mse = evaluate_mse_db(
        [](std::span<const double> w) { return std::vector<double>{w[0]}; }, batch);
    CHECK(mse[0] == kMseFloorDb);
  }
  SUBCASE("ZOH on uncorrelated unit-variance windows gives about +3 dB") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> dist;
    PredictionBatch batch;
    batch.input_len = 1;
    batch.t_csi = 2;
    for (std::size_t r = 0; r < 200000; ++r) {
      batch.slot_index.push_back(r);
      batch.inputs.push_back(dist(rng));
      batch.targets_tdd.push_back(dist(rng));
    }
    const auto mse = evaluate_mse_db_zoh(batch);
    CHECK(mse[0] == doctest::Approx(3.01).epsilon(0.03));
  }
  SUBCASE("Wiener on AR(1) at horizon 1 lands on the analytic -7.21 dB") {
    const double rho = 0.9;
    std::mt19937_64 rng(41);
    std::normal_distribution<double> innov(0.0, std::sqrt(1.0 - rho * rho));
    std::vector<double> series(300000);
    series[0] = std::normal_distribution<double>(0.0, 1.0)(rng);
    for (std::size_t i = 1; i < series.size(); ++i)
      series[i] = rho * series[i - 1] + innov(rng);

    PredictorSpec spec;
    spec.kind = PredictorKind::wiener;
    spec.input_len = 4;
    spec.t_csi = 2;
    const auto bank = build_filter_bank(
        estimate_autocorrelation({series.data(), 150000}, 2 * 3 + 1), 4, 2);
    const auto split = build_windows(
        std::span<const double>(series.data() + 150000, 150000), spec);
    const auto mse = evaluate_mse_db(bank, split);
    CHECK(std::abs(mse[0] - 10.0 * std::log10(1.0 - rho * rho)) < 0.3);  // -7.21 dB
  }
  SUBCASE("empty split is a domain error") {
    PredictionBatch batch;
    batch.input_len = 1;
    batch.t_csi = 2;
    CHECK_THROWS_AS(static_cast<void>(evaluate_mse_db_zoh(batch)), std::domain_error);
  }
}

TEST_CASE("TDD loop: static channel makes ZOH ideal") {
  const CqiTable table = default_cqi_table();
  FadingChannel ch(static_channel(800));
  const EffSinrTrace trace = build_trace(ch, table);

  RunOptions opt;
  opt.t_csi = 4;
  opt.min_intervals = 100;
  const RunReport ideal = run_tdd(trace, table, ideal_link(4), opt);
  const RunReport zoh = run_tdd(trace, table, zoh_link(4, 3), opt);
  CHECK(zoh.unconditioned_tp == doctest::Approx(ideal.unconditioned_tp).epsilon(1e-12));
  CHECK(ideal.n_intervals >= 100);
  // cqi error histogram concentrates at zero
  CHECK(zoh.cqi_error_hist.at(0) == doctest::Approx(1.0));
}

TEST_CASE("TDD loop: ideal dominates, Wiener beats ZOH at long reporting periods") {
  const CqiTable table = default_cqi_table();
  PredictorSpec spec;
  spec.kind = PredictorKind::wiener;
  spec.input_len = 4;
  spec.t_csi = 32;

  const TraceSet traces =
      build_traces({channel(10.0, slots_for_windows(3500, 32, 4), 42)}, table, 0.784);
  const EffSinrTrace& train_trace = traces.traces.front();
  const std::vector<double> series = standardized_track(train_trace, -1);
  const auto ac = estimate_autocorrelation({series.data(), train_trace.train_slots},
                                           32 * 3 + 31);
  const WienerBank bank = build_filter_bank(ac, 4, 32);

  FadingChannel eval_ch(channel(10.0, slots_for_windows(160, 32, 4), 777));
  const EffSinrTrace ev = build_trace(eval_ch, table);

  RunOptions opt;
  opt.t_csi = 32;
  opt.min_intervals = 120;
  const RunReport ideal = run_tdd(ev, table, ideal_link(4), opt);
  const RunReport zoh = run_tdd(ev, table, zoh_link(4, 31), opt);
  const RunReport wiener = run_tdd(ev, table, wiener_link(bank), opt);

  CHECK(wiener.unconditioned_tp > zoh.unconditioned_tp);
  CHECK(ideal.unconditioned_tp >= wiener.unconditioned_tp);
  CHECK(ideal.unconditioned_tp >= zoh.unconditioned_tp);

  // consistency: unconditioned throughput is the mean of the recorded slots
  double mean = 0.0;
  for (double tp : wiener.per_slot_tp) mean += tp;
  mean /= static_cast<double>(wiener.per_slot_tp.size());
  CHECK(wiener.unconditioned_tp == doctest::Approx(mean).epsilon(1e-12));

  // histogram is a probability distribution
  double prob = 0.0;
  for (const auto& [err, p] : wiener.cqi_error_hist) prob += p;
  CHECK(prob == doctest::Approx(1.0).epsilon(1e-9));

  // BLER-target respect for the ideal selection
  double bler_acc = 0.0;
  std::size_t bler_n = 0;
  for (std::size_t n = 0; n < ev.n_slots; ++n) {
    const int sel = select_cqi_scalar(ev.best_cqi_sinr[n], table);
    if (sel >= 1) {
      bler_acc += bler(sel, ev.cqi_track(n, sel), table);
      ++bler_n;
    }
  }
  CHECK(bler_acc / static_cast<double>(bler_n) <= table.bler_target + 0.02);
}

TEST_CASE("TDD loop guards") {
  const CqiTable table = default_cqi_table();
  FadingChannel ch(static_channel(200));
  const EffSinrTrace trace = build_trace(ch, table);
  RunOptions opt;
  opt.t_csi = 4;
  opt.min_intervals = 100;
  CHECK_THROWS_AS(run_tdd(trace, table, zoh_link(4, 3), opt), std::invalid_argument);

  opt.min_intervals = 10;
  LinkPredictor bad = zoh_link(4, 3, TargetStrategy::by_cqi);
  bad.tracks.resize(3);  // wrong track count
  CHECK_THROWS_AS(run_tdd(trace, table, bad, opt), std::invalid_argument);
}

TEST_CASE("FDD loop: static channel concentrates the error histogram at zero") {
  const CqiTable table = default_cqi_table();
  FadingChannel ch(static_channel(900));
  const EffSinrTrace trace = build_trace(ch, table);
  RunOptions opt;
  opt.t_csi = 8;
  opt.min_intervals = 100;
  const RunReport rep = run_fdd(trace, table, zoh_link(2, 1), 3, opt);
  CHECK(rep.fdd_horizon == 3);
  CHECK(rep.cqi_error_hist.at(0) == doctest::Approx(1.0));
  CHECK_THROWS_AS(run_fdd(trace, table, zoh_link(2, 1), 8, opt), std::invalid_argument);
}

TEST_CASE("stochastic BLER draws are deterministic and mean-consistent") {
  const CqiTable table = default_cqi_table();
  FadingChannel ch(channel(15.0, 2500, 12));
  const EffSinrTrace trace = build_trace(ch, table);
  RunOptions opt;
  opt.t_csi = 4;
  opt.min_intervals = 300;
  opt.stochastic_bler = true;
  opt.bler_seed = 5;
  const RunReport a = run_tdd(trace, table, zoh_link(4, 3), opt);
  const RunReport b = run_tdd(trace, table, zoh_link(4, 3), opt);
  CHECK(a.unconditioned_tp == b.unconditioned_tp);

  opt.stochastic_bler = false;
  const RunReport expected = run_tdd(trace, table, zoh_link(4, 3), opt);
  CHECK(a.unconditioned_tp == doctest::Approx(expected.unconditioned_tp).epsilon(0.08));
}

TEST_CASE("run report CSV bundle") {
  namespace fs = std::filesystem;
  const CqiTable table = default_cqi_table();
  FadingChannel ch(channel(15.0, 1200, 9));
  const EffSinrTrace trace = build_trace(ch, table);
  RunOptions opt;
  opt.t_csi = 4;
  opt.min_intervals = 100;
  const RunReport rep = run_tdd(trace, table, zoh_link(4, 3), opt);

  const std::string dir = "report_bundle_test";
  write_run_report(rep, dir, 3);
  for (const char* f : {"conditioned.csv", "summary.csv", "cqi_error.csv"}) {
    std::ifstream in(fs::path(dir) / f);
    REQUIRE(in.good());
    std::string line;
    std::getline(in, line);
    CHECK(line.rfind("# config_hash=", 0) == 0);
  }
  fs::remove_all(dir);
}
