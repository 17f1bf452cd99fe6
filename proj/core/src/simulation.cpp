#include "csipred/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <stdexcept>

#include "csipred/csvio.hpp"

namespace csipred {

namespace {

double to_db_floored(double mse) {
  if (!(mse > 0.0)) return kMseFloorDb;
  return std::max(10.0 * std::log10(mse), kMseFloorDb);
}

}  // namespace

double slot_throughput(int selected_cqi, std::span<const double> actual_per_cqi_sinr,
                       const CqiTable& table, std::size_t n_rb, std::size_t n_layers,
                       double slot_duration_s) {
  if (selected_cqi < 0 || selected_cqi > kNumCqi)
    throw std::domain_error("selected CQI must lie in 0..15");
  if (actual_per_cqi_sinr.size() != kNumCqi)
    throw std::domain_error("per-CQI SINR vector must have 15 entries");
  if (!(slot_duration_s > 0.0)) throw std::domain_error("slot duration must be positive");
  if (selected_cqi == 0) return 0.0;

  const CqiEntry& e = table.entry(selected_cqi);
  const double gamma = actual_per_cqi_sinr[static_cast<std::size_t>(selected_cqi - 1)];
  const double success = 1.0 - bler(selected_cqi, gamma, table);
  const double bits = e.spectral_eff * static_cast<double>(n_rb) * kSubcarriersPerRb *
                      kSymbolsPerSlot * static_cast<double>(n_layers);
  return bits * success / slot_duration_s / 1e6;
}

TraceSet build_traces(const std::vector<ChannelConfig>& configs, const CqiTable& table,
                      double train_fraction) {
  if (configs.empty()) throw std::invalid_argument("no channel configs given");
  TraceSet set;
  set.configs = configs;
  set.traces.reserve(configs.size());
  for (const ChannelConfig& config : configs) {
    FadingChannel channel(config);
    set.traces.push_back(build_trace(channel, table, train_fraction));
  }
  return set;
}

namespace {

void append_rows(PredictionBatch& dst, const PredictionBatch& src, std::size_t first,
                 std::size_t last) {
  const std::size_t p = src.input_len;
  const std::size_t h = src.t_csi - 1;
  for (std::size_t r = first; r < last; ++r) {
    dst.slot_index.push_back(src.slot_index[r]);
    dst.inputs.insert(dst.inputs.end(), src.inputs.begin() + static_cast<std::ptrdiff_t>(r * p),
                      src.inputs.begin() + static_cast<std::ptrdiff_t>((r + 1) * p));
    dst.targets_tdd.insert(dst.targets_tdd.end(),
                           src.targets_tdd.begin() + static_cast<std::ptrdiff_t>(r * h),
                           src.targets_tdd.begin() + static_cast<std::ptrdiff_t>((r + 1) * h));
    if (!src.targets_fdd.empty()) dst.targets_fdd.push_back(src.targets_fdd[r]);
  }
}

}  // namespace

std::vector<double> standardized_track(const EffSinrTrace& trace, int track) {
  if (track < -1 || track >= kNumCqi)
    throw std::invalid_argument("track must be -1 (best) or 0..14");
  std::vector<double> series(trace.n_slots);
  if (track < 0) {
    const Standardizer& s = trace.best_stats;
    for (std::size_t n = 0; n < trace.n_slots; ++n) series[n] = s.apply(trace.best_cqi_sinr[n]);
  } else {
    const Standardizer& s = trace.cqi_stats[static_cast<std::size_t>(track)];
    for (std::size_t n = 0; n < trace.n_slots; ++n)
      series[n] = s.apply(trace.cqi_track(n, track + 1));
  }
  return series;
}

Dataset make_dataset(const TraceSet& traces, const PredictorSpec& spec, int track,
                     std::array<double, 3> fractions) {
  spec.validate();
  const double frac_sum = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(frac_sum - 1.0) > 1e-9)
    throw std::invalid_argument("split fractions must sum to 1");
  if (!(fractions[0] > 0.0) || !(fractions[1] >= 0.0) || !(fractions[2] >= 0.0))
    throw std::invalid_argument("split fractions must be non-negative with train > 0");

  Dataset ds;
  ds.fractions = fractions;
  ds.provenance = traces.configs;
  ds.track = track;
  for (PredictionBatch* b : {&ds.train, &ds.val, &ds.test}) {
    b->input_len = spec.input_len;
    b->t_csi = spec.t_csi;
  }

  for (const EffSinrTrace& trace : traces.traces) {
    const std::vector<double> series = standardized_track(trace, track);
    const PredictionBatch all = build_windows(series, spec);
    const std::size_t n = all.n_windows();
    // Chronological split, sizes within one window of the exact fractions.
    std::size_t n_train = static_cast<std::size_t>(std::llround(fractions[0] * static_cast<double>(n)));
    std::size_t n_val = static_cast<std::size_t>(std::llround(fractions[1] * static_cast<double>(n)));
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);
    append_rows(ds.train, all, 0, n_train);
    append_rows(ds.val, all, n_train, n_train + n_val);
    append_rows(ds.test, all, n_train + n_val, n);
  }
  return ds;
}

Dataset generate_dataset(const std::vector<ChannelConfig>& configs, const CqiTable& table,
                         const PredictorSpec& spec, std::array<double, 3> fractions) {
  const TraceSet traces = build_traces(configs, table, fractions[0]);
  return make_dataset(traces, spec, spec.target == TargetStrategy::by_cqi ? 0 : -1,
                      fractions);
}

LinkPredictor ideal_link(std::size_t input_len) {
  LinkPredictor p;
  p.name = "ideal";
  p.input_len = input_len;
  p.ideal = true;
  p.flops = 0;
  return p;
}

LinkPredictor zoh_link(std::size_t input_len, std::size_t output_len, TargetStrategy target) {
  LinkPredictor p;
  p.name = "zoh";
  p.target = target;
  p.input_len = input_len;
  p.flops = 0;
  const std::size_t n_tracks = target == TargetStrategy::by_cqi ? kNumCqi : 1;
  for (std::size_t i = 0; i < n_tracks; ++i)
    p.tracks.push_back([output_len](std::span<const double> window) {
      return zoh_predict(window, output_len);
    });
  return p;
}

LinkPredictor wiener_link(const WienerBank& bank) {
  LinkPredictor p;
  p.name = "wiener";
  p.input_len = bank.p;
  PredictorSpec spec;
  spec.kind = PredictorKind::wiener;
  spec.input_len = bank.p;
  spec.t_csi = std::max<std::size_t>(bank.t_csi, 2);
  spec.mode = bank.n_horizons == bank.t_csi - 1 ? PredictionMode::tdd_vector
                                                : PredictionMode::fdd_scalar;
  if (spec.mode == PredictionMode::fdd_scalar) spec.fdd_horizon = 1;
  p.flops = predictor_flops(spec);
  WienerBank copy = bank;
  p.tracks.push_back([copy](std::span<const double> window) {
    return wiener_predict(copy, window);
  });
  return p;
}

LinkPredictor wiener_link_by_cqi(std::vector<WienerBank> banks) {
  if (banks.size() != kNumCqi)
    throw std::invalid_argument("by-CQI Wiener link needs 15 banks");
  LinkPredictor p;
  p.name = "wiener";
  p.target = TargetStrategy::by_cqi;
  p.input_len = banks.front().p;
  PredictorSpec spec;
  spec.kind = PredictorKind::wiener;
  spec.input_len = banks.front().p;
  spec.t_csi = std::max<std::size_t>(banks.front().t_csi, 2);
  spec.target = TargetStrategy::by_cqi;
  p.flops = predictor_flops(spec);
  for (auto& bank : banks) {
    WienerBank copy = std::move(bank);
    p.tracks.push_back([copy](std::span<const double> window) {
      return wiener_predict(copy, window);
    });
  }
  return p;
}

namespace {

std::uint64_t neural_spec_flops(const NeuralModel& model, TargetStrategy target) {
  PredictorSpec spec;
  spec.kind = model.kind;
  spec.input_len = model.input_len;
  spec.hidden = model.hidden;
  spec.target = target;
  if (model.output_len == 1) {
    spec.t_csi = 2;
    spec.mode = PredictionMode::fdd_scalar;
    spec.fdd_horizon = 1;
  } else {
    spec.t_csi = model.output_len + 1;
    spec.mode = PredictionMode::tdd_vector;
  }
  return predictor_flops(spec);
}

}  // namespace

LinkPredictor neural_link(const NeuralModel& model) {
  LinkPredictor p;
  p.name = to_string(model.kind);
  p.input_len = model.input_len;
  p.flops = neural_spec_flops(model, TargetStrategy::best_cqi);
  NeuralModel copy = model;
  p.tracks.push_back([copy](std::span<const double> window) {
    return forward(copy, window);
  });
  return p;
}

LinkPredictor neural_link_by_cqi(std::vector<NeuralModel> models) {
  if (models.size() != kNumCqi)
    throw std::invalid_argument("by-CQI neural link needs 15 models");
  LinkPredictor p;
  p.name = to_string(models.front().kind);
  p.target = TargetStrategy::by_cqi;
  p.input_len = models.front().input_len;
  p.flops = neural_spec_flops(models.front(), TargetStrategy::by_cqi);
  for (auto& model : models) {
    NeuralModel copy = std::move(model);
    p.tracks.push_back([copy](std::span<const double> window) {
      return forward(copy, window);
    });
  }
  return p;
}

namespace {

struct LoopContext {
  const EffSinrTrace& trace;
  const CqiTable& table;
  const LinkPredictor& predictor;
  std::size_t t_csi;
  std::size_t out_len;  // predictions per report
  std::vector<std::size_t> report_slots;
  std::mt19937_64 bler_rng;
  bool stochastic;
};

// Track value (linear) for track index -1 (best) or 0..14.
double track_value(const EffSinrTrace& trace, int track, std::size_t slot) {
  return track < 0 ? trace.best_cqi_sinr[slot]
                   : trace.cqi_track(slot, track + 1);
}

const Standardizer& track_stats(const EffSinrTrace& trace, int track) {
  return track < 0 ? trace.best_stats : trace.cqi_stats[static_cast<std::size_t>(track)];
}

// Standardized predictions for one report instant, one row per track.
// Row layout: [track][horizon 0..out_len-1].
void predict_tracks(const LoopContext& ctx, std::size_t n0,
                    std::vector<std::vector<double>>& preds_std) {
  const std::size_t n_tracks =
      ctx.predictor.target == TargetStrategy::by_cqi ? kNumCqi : 1;
  preds_std.resize(n_tracks);
  std::vector<double> window(ctx.predictor.input_len);
  for (std::size_t t = 0; t < n_tracks; ++t) {
    const int track = ctx.predictor.target == TargetStrategy::by_cqi
                          ? static_cast<int>(t)
                          : -1;
    const Standardizer& stats = track_stats(ctx.trace, track);
    if (ctx.predictor.ideal) {
      preds_std[t].resize(ctx.out_len);
      for (std::size_t i = 0; i < ctx.out_len; ++i)
        preds_std[t][i] = stats.apply(track_value(ctx.trace, track, n0 + i + 1));
      continue;
    }
    for (std::size_t i = 0; i < ctx.predictor.input_len; ++i)
      window[i] = stats.apply(track_value(ctx.trace, track, n0 - ctx.t_csi * i));
    preds_std[t] = ctx.predictor.tracks[t](window);
    if (preds_std[t].size() != ctx.out_len)
      throw std::invalid_argument("predictor emitted " +
                                  std::to_string(preds_std[t].size()) +
                                  " values per report, expected " +
                                  std::to_string(ctx.out_len));
  }
}

int select_from_predictions(const LoopContext& ctx,
                            const std::vector<std::vector<double>>& preds_std,
                            std::size_t horizon_idx) {
  if (ctx.predictor.target == TargetStrategy::by_cqi) {
    int best = 0;
    for (int i = kNumCqi; i >= 1; --i) {
      const Standardizer& stats = ctx.trace.cqi_stats[static_cast<std::size_t>(i - 1)];
      const double gamma = stats.invert(preds_std[static_cast<std::size_t>(i - 1)][horizon_idx]);
      if (gamma > 0.0 && std::isfinite(gamma) &&
          bler(i, gamma, ctx.table) <= ctx.table.bler_target) {
        best = i;
        break;
      }
    }
    return best;
  }
  const double gamma = ctx.trace.best_stats.invert(preds_std[0][horizon_idx]);
  return select_cqi_scalar(gamma, ctx.table);
}

double scored_throughput(LoopContext& ctx, int selected, std::size_t slot) {
  const auto actual = ctx.trace.slot_per_cqi(slot);
  const ChannelConfig& cfg = ctx.trace.config;
  if (!ctx.stochastic)
    return slot_throughput(selected, actual, ctx.table, cfg.n_rb, cfg.n_layers,
                           cfg.slot_duration_s);
  if (selected == 0) return 0.0;
  const double p_err = bler(selected, actual[static_cast<std::size_t>(selected - 1)], ctx.table);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  if (unif(ctx.bler_rng) < p_err) return 0.0;
  const double bits = ctx.table.entry(selected).spectral_eff *
                      static_cast<double>(cfg.n_rb) * kSubcarriersPerRb * kSymbolsPerSlot *
                      static_cast<double>(cfg.n_layers);
  return bits / cfg.slot_duration_s / 1e6;
}

LoopContext make_context(const EffSinrTrace& trace, const CqiTable& table,
                         const LinkPredictor& predictor, const RunOptions& options,
                         std::size_t out_len) {
  table.validate();
  if (options.t_csi < 2) throw std::invalid_argument("t_csi must be >= 2");
  const std::size_t expected_tracks =
      predictor.target == TargetStrategy::by_cqi ? kNumCqi : 1;
  if (!predictor.ideal && predictor.tracks.size() != expected_tracks)
    throw std::invalid_argument("predictor exposes " +
                                std::to_string(predictor.tracks.size()) +
                                " tracks but the target strategy needs " +
                                std::to_string(expected_tracks));

  LoopContext ctx{trace, table, predictor, options.t_csi, out_len, {},
                  std::mt19937_64(options.bler_seed), options.stochastic_bler};

  const std::size_t t = options.t_csi;
  const std::size_t p = predictor.input_len;
  const std::size_t last = options.last_slot == 0 ? trace.n_slots : options.last_slot;
  const std::size_t k_min = p - 1;
  for (std::size_t k = k_min;; ++k) {
    const std::size_t n0 = t * k;
    if (n0 + t - 1 >= last || n0 + t - 1 >= trace.n_slots) break;
    if (n0 < options.first_slot) continue;
    ctx.report_slots.push_back(n0);
  }
  if (ctx.report_slots.size() < options.min_intervals) {
    std::ostringstream ss;
    ss << "only " << ctx.report_slots.size() << " transmission intervals available, need "
       << options.min_intervals << " (extend the trace or widen the slot range)";
    throw std::invalid_argument(ss.str());
  }
  return ctx;
}

}  // namespace

RunReport run_tdd(const EffSinrTrace& trace, const CqiTable& table,
                  const LinkPredictor& predictor, const RunOptions& options) {
  LoopContext ctx = make_context(trace, table, predictor, options, options.t_csi - 1);
  const std::size_t horizons = options.t_csi - 1;

  RunReport report;
  report.predictor = predictor.name;
  report.config = trace.config;
  report.t_csi = options.t_csi;
  report.flops = predictor.flops;
  report.conditioned_tp.assign(horizons, 0.0);
  report.mse_per_tau_db.assign(horizons, 0.0);
  std::vector<double> sq_err(horizons, 0.0);
  std::map<int, std::size_t> err_counts;

  std::vector<std::vector<double>> preds_std;
  for (const std::size_t n0 : ctx.report_slots) {
    predict_tracks(ctx, n0, preds_std);
    for (std::size_t tau = 1; tau <= horizons; ++tau) {
      const std::size_t slot = n0 + tau;
      const int selected = select_from_predictions(ctx, preds_std, tau - 1);
      const double tp = scored_throughput(ctx, selected, slot);
      report.conditioned_tp[tau - 1] += tp;
      report.per_slot_tp.push_back(tp);
      err_counts[trace.best_cqi_index[slot] - selected] += 1;

      // Standardized-domain squared error, averaged over tracks for by-CQI.
      double se = 0.0;
      for (std::size_t t = 0; t < preds_std.size(); ++t) {
        const int track = predictor.target == TargetStrategy::by_cqi
                              ? static_cast<int>(t)
                              : -1;
        const Standardizer& stats = track_stats(trace, track);
        const double truth = stats.apply(track_value(trace, track, slot));
        const double e = truth - preds_std[t][tau - 1];
        se += e * e;
      }
      sq_err[tau - 1] += se / static_cast<double>(preds_std.size());
    }
  }

  const double n_intervals = static_cast<double>(ctx.report_slots.size());
  report.n_intervals = ctx.report_slots.size();
  for (std::size_t tau = 0; tau < horizons; ++tau) {
    report.conditioned_tp[tau] /= n_intervals;
    report.mse_per_tau_db[tau] = to_db_floored(sq_err[tau] / n_intervals);
  }
  double total = 0.0;
  for (double tp : report.per_slot_tp) total += tp;
  report.unconditioned_tp = total / static_cast<double>(report.per_slot_tp.size());
  const double n_slots_scored = static_cast<double>(report.per_slot_tp.size());
  for (auto& [err, count] : err_counts)
    report.cqi_error_hist[err] = static_cast<double>(count) / n_slots_scored;
  return report;
}

RunReport run_tdd(const SinrGrid& grid, const CqiTable& table,
                  const LinkPredictor& predictor, const RunOptions& options) {
  return run_tdd(build_trace(grid, table), table, predictor, options);
}

RunReport run_fdd(const EffSinrTrace& trace, const CqiTable& table,
                  const LinkPredictor& predictor, std::size_t fdd_horizon,
                  const RunOptions& options) {
  if (fdd_horizon < 1 || fdd_horizon > options.t_csi - 1)
    throw std::invalid_argument("fdd_horizon must lie in [1, t_csi-1]");
  LoopContext ctx = make_context(trace, table, predictor, options, 1);
  const std::size_t horizons = options.t_csi - 1;

  RunReport report;
  report.predictor = predictor.name;
  report.config = trace.config;
  report.t_csi = options.t_csi;
  report.fdd_horizon = fdd_horizon;
  report.flops = predictor.flops;
  report.conditioned_tp.assign(horizons, 0.0);
  report.mse_per_tau_db.assign(horizons, 0.0);
  std::vector<double> sq_err(horizons, 0.0);
  std::map<int, std::size_t> err_counts;

  std::vector<std::vector<double>> preds_std;
  for (const std::size_t n0 : ctx.report_slots) {
    // For the ideal baseline the "prediction" is the true value at the
    // configured horizon, mirroring a genie-aided UE report.
    if (predictor.ideal) {
      const std::size_t n_tracks =
          predictor.target == TargetStrategy::by_cqi ? kNumCqi : 1;
      preds_std.assign(n_tracks, std::vector<double>(1));
      for (std::size_t t = 0; t < n_tracks; ++t) {
        const int track =
            predictor.target == TargetStrategy::by_cqi ? static_cast<int>(t) : -1;
        preds_std[t][0] = track_stats(trace, track)
                              .apply(track_value(trace, track, n0 + fdd_horizon));
      }
    } else {
      predict_tracks(ctx, n0, preds_std);
    }
    const int selected = select_from_predictions(ctx, preds_std, 0);

    for (std::size_t tau = 1; tau <= horizons; ++tau) {
      const std::size_t slot = n0 + tau;
      const double tp = scored_throughput(ctx, selected, slot);
      report.conditioned_tp[tau - 1] += tp;
      report.per_slot_tp.push_back(tp);
      err_counts[trace.best_cqi_index[slot] - selected] += 1;

      double se = 0.0;
      for (std::size_t t = 0; t < preds_std.size(); ++t) {
        const int track = predictor.target == TargetStrategy::by_cqi
                              ? static_cast<int>(t)
                              : -1;
        const Standardizer& stats = track_stats(trace, track);
        const double truth = stats.apply(track_value(trace, track, slot));
        const double e = truth - preds_std[t][0];
        se += e * e;
      }
      sq_err[tau - 1] += se / static_cast<double>(preds_std.size());
    }
  }

  const double n_intervals = static_cast<double>(ctx.report_slots.size());
  report.n_intervals = ctx.report_slots.size();
  for (std::size_t tau = 0; tau < horizons; ++tau) {
    report.conditioned_tp[tau] /= n_intervals;
    report.mse_per_tau_db[tau] = to_db_floored(sq_err[tau] / n_intervals);
  }
  double total = 0.0;
  for (double tp : report.per_slot_tp) total += tp;
  report.unconditioned_tp = total / static_cast<double>(report.per_slot_tp.size());
  const double n_slots_scored = static_cast<double>(report.per_slot_tp.size());
  for (auto& [err, count] : err_counts)
    report.cqi_error_hist[err] = static_cast<double>(count) / n_slots_scored;
  return report;
}

std::vector<double> evaluate_mse_db(const TrackPredictFn& predict,
                                    const PredictionBatch& split) {
  if (split.n_windows() == 0) throw std::domain_error("empty batch split");
  std::vector<double> acc;
  for (std::size_t r = 0; r < split.n_windows(); ++r) {
    const std::vector<double> pred = predict(split.input_row(r));
    std::span<const double> target;
    if (pred.size() == split.t_csi - 1) {
      target = split.tdd_target_row(r);
    } else if (pred.size() == 1 && split.targets_fdd.size() == split.n_windows()) {
      target = {split.targets_fdd.data() + r, 1};
    } else {
      throw std::domain_error("prediction length matches neither the TDD nor FDD targets");
    }
    if (acc.empty()) acc.assign(pred.size(), 0.0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const double e = target[i] - pred[i];
      acc[i] += e * e;
    }
  }
  for (double& v : acc) v = to_db_floored(v / static_cast<double>(split.n_windows()));
  return acc;
}

std::vector<double> evaluate_mse_db(const WienerBank& bank, const PredictionBatch& split) {
  return evaluate_mse_db(
      [&bank](std::span<const double> w) { return wiener_predict(bank, w); }, split);
}

std::vector<double> evaluate_mse_db(const NeuralModel& model, const PredictionBatch& split) {
  return evaluate_mse_db(
      [&model](std::span<const double> w) { return forward(model, w); }, split);
}

std::vector<double> evaluate_mse_db_zoh(const PredictionBatch& split) {
  const std::size_t out = split.t_csi - 1;
  return evaluate_mse_db(
      [out](std::span<const double> w) { return zoh_predict(w, out); }, split);
}

void write_run_report(const RunReport& report, const std::string& directory,
                      std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(directory);
  const std::uint64_t hash = fnv1a_hash(report.config.fingerprint() + "|" + report.predictor);
  const std::string comment = csv_comment(hash, seed) + "\n";

  std::string cond = comment + "tau,throughput_mbps,mse_db\n";
  for (std::size_t tau = 1; tau <= report.conditioned_tp.size(); ++tau)
    cond += std::to_string(tau) + "," + format_double(report.conditioned_tp[tau - 1]) + "," +
            format_double(report.mse_per_tau_db[tau - 1]) + "\n";
  write_file_atomic((fs::path(directory) / "conditioned.csv").string(), cond);

  std::string summary = comment;
  summary += "config_hash,predictor,t_csi,fdd_horizon,doppler_hz,flops,n_intervals,unconditioned_tp_mbps";
  for (std::size_t tau = 1; tau <= report.mse_per_tau_db.size(); ++tau)
    summary += ",mse_db_tau_" + std::to_string(tau);
  summary += "\n";
  char hashbuf[20];
  std::snprintf(hashbuf, sizeof(hashbuf), "%016llx", static_cast<unsigned long long>(hash));
  summary += std::string(hashbuf) + "," + report.predictor + "," + std::to_string(report.t_csi) +
             "," + std::to_string(report.fdd_horizon) + "," +
             format_double(report.config.doppler_hz) + "," + std::to_string(report.flops) + "," +
             std::to_string(report.n_intervals) + "," + format_double(report.unconditioned_tp);
  for (double v : report.mse_per_tau_db) summary += "," + format_double(v);
  summary += "\n";
  write_file_atomic((fs::path(directory) / "summary.csv").string(), summary);

  std::string hist = comment + "error,probability\n";
  for (const auto& [err, prob] : report.cqi_error_hist)
    hist += std::to_string(err) + "," + format_double(prob) + "\n";
  write_file_atomic((fs::path(directory) / "cqi_error.csv").string(), hist);
}

}  // namespace csipred
