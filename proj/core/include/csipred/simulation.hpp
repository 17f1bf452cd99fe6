// End-to-end TDD and FDD link-adaptation loops, dataset generation with
// chronological splits, and throughput / MSE / CQI-error metrics.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csipred/eesm.hpp"
#include "csipred/neural.hpp"
#include "csipred/predictor.hpp"
#include "csipred/wiener.hpp"

namespace csipred {

// Expected throughput of one data slot in Mbps: zero for CQI 0, otherwise
// SE(i) * n_rb * 12 * 14 * n_layers * (1 - BLER(i, actual)) / slot_duration.
double slot_throughput(int selected_cqi, std::span<const double> actual_per_cqi_sinr,
                       const CqiTable& table, std::size_t n_rb, std::size_t n_layers,
                       double slot_duration_s);

// Traces for a list of channel configs, built without materializing grids.
struct TraceSet {
  std::vector<EffSinrTrace> traces;
  std::vector<ChannelConfig> configs;
};
TraceSet build_traces(const std::vector<ChannelConfig>& configs, const CqiTable& table,
                      double train_fraction = 0.784);

// Chronologically split window sets. Windows never straddle config
// boundaries; each config's series is standardized with its own
// train-segment statistics before windowing.
struct Dataset {
  PredictionBatch train, val, test;
  std::array<double, 3> fractions{0.784, 0.196, 0.02};
  std::vector<ChannelConfig> provenance;
  int track = -1;  // -1 = best-CQI track, 0..14 = per-CQI track
};

// Slot-resolution series of one track, standardized with the trace's frozen
// statistics. track = -1 selects the best-CQI track, 0..14 a per-CQI track.
std::vector<double> standardized_track(const EffSinrTrace& trace, int track);

// track = -1 uses the best-CQI series, 0..14 the per-CQI series of that index.
Dataset make_dataset(const TraceSet& traces, const PredictorSpec& spec, int track = -1,
                     std::array<double, 3> fractions = {0.784, 0.196, 0.02});

Dataset generate_dataset(const std::vector<ChannelConfig>& configs, const CqiTable& table,
                         const PredictorSpec& spec,
                         std::array<double, 3> fractions = {0.784, 0.196, 0.02});

// One predictor as seen by the link loop: a prediction function per track
// operating on standardized windows (most recent first). ideal substitutes
// the true future values and needs no functions.
using TrackPredictFn = std::function<std::vector<double>(std::span<const double>)>;

struct LinkPredictor {
  std::string name;
  TargetStrategy target = TargetStrategy::best_cqi;
  std::size_t input_len = 4;
  std::vector<TrackPredictFn> tracks;  // size 1 (best-CQI) or 15 (by-CQI)
  std::uint64_t flops = 0;
  bool ideal = false;
};

LinkPredictor ideal_link(std::size_t input_len = 1);
LinkPredictor zoh_link(std::size_t input_len, std::size_t output_len,
                       TargetStrategy target = TargetStrategy::best_cqi);
LinkPredictor wiener_link(const WienerBank& bank);
LinkPredictor wiener_link_by_cqi(std::vector<WienerBank> banks);
LinkPredictor neural_link(const NeuralModel& model);
LinkPredictor neural_link_by_cqi(std::vector<NeuralModel> models);

struct RunReport {
  std::string predictor;
  ChannelConfig config;
  std::size_t t_csi = 0;
  std::size_t fdd_horizon = 0;              // 0 for TDD runs
  std::vector<double> conditioned_tp;       // Mbps, index tau-1
  double unconditioned_tp = 0.0;            // mean of per_slot_tp
  std::vector<double> mse_per_tau_db;       // standardized-domain MSE
  std::map<int, double> cqi_error_hist;     // P(real - used), sums to 1
  std::uint64_t flops = 0;
  std::size_t n_intervals = 0;
  std::vector<double> per_slot_tp;          // every simulated data slot, Mbps
};

struct RunOptions {
  std::size_t t_csi = 32;
  // Evaluate report instants with slot index in [first_slot, last_slot);
  // last_slot = 0 means the end of the trace.
  std::size_t first_slot = 0;
  std::size_t last_slot = 0;
  // Draw Bernoulli block errors instead of scoring expected throughput.
  bool stochastic_bler = false;
  std::uint64_t bler_seed = 0;
  std::size_t min_intervals = 100;
};

// TDD loop: each report instant predicts the standardized effective SINR for
// every slot of the coming interval; per slot a CQI is selected from the
// destandardized prediction (best-CQI: scalar sweep over all curves; by-CQI:
// full selection over the 15 predicted tracks) and scored against the true
// per-CQI effective SINRs.
RunReport run_tdd(const EffSinrTrace& trace, const CqiTable& table,
                  const LinkPredictor& predictor, const RunOptions& options);
RunReport run_tdd(const SinrGrid& grid, const CqiTable& table,
                  const LinkPredictor& predictor, const RunOptions& options);

// FDD loop: one scalar prediction per report at lag fdd_horizon; the selected
// CQI is reused for the whole interval. Track functions must emit one value.
RunReport run_fdd(const EffSinrTrace& trace, const CqiTable& table,
                  const LinkPredictor& predictor, std::size_t fdd_horizon,
                  const RunOptions& options);

// Per-horizon MSE in dB over a batch split, on standardized values, floored
// at -60 dB. Throws std::domain_error on an empty split.
std::vector<double> evaluate_mse_db(const TrackPredictFn& predict,
                                    const PredictionBatch& split);
std::vector<double> evaluate_mse_db(const WienerBank& bank, const PredictionBatch& split);
std::vector<double> evaluate_mse_db(const NeuralModel& model, const PredictionBatch& split);
std::vector<double> evaluate_mse_db_zoh(const PredictionBatch& split);

inline constexpr double kMseFloorDb = -60.0;

// CSV bundle: conditioned.csv (tau, throughput_mbps, mse_db), summary.csv
// (one row), cqi_error.csv (error, probability).
void write_run_report(const RunReport& report, const std::string& directory,
                      std::uint64_t seed = 0);

}  // namespace csipred
