// Exponential effective SINR mapping, BLER reference curves, CQI selection,
// and the standardization shared by every predictor.
#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "csipred/channel.hpp"

namespace csipred {

inline constexpr int kNumCqi = 15;

struct CqiEntry {
  double beta;          // EESM calibration parameter, linear
  double bler_mid_db;   // logistic midpoint of the AWGN BLER curve, dB
  double bler_slope;    // logistic steepness, 1/dB
  double spectral_eff;  // bits per resource element
};

struct CqiTable {
  std::array<CqiEntry, kNumCqi> entries;
  double bler_target = 0.1;

  const CqiEntry& entry(int cqi) const { return entries[static_cast<std::size_t>(cqi - 1)]; }
  // Throws std::invalid_argument unless beta, bler_mid_db and spectral_eff are
  // strictly increasing and bler_target lies in (0, 1).
  void validate() const;
  std::string fingerprint() const;
};

CqiTable default_cqi_table();

// JSON file with keys bler_target and entries[].{beta, bler_mid_db,
// bler_slope, spectral_eff}. Unknown keys are rejected.
CqiTable load_cqi_table(const std::string& path);

// Effective SINR of one slot: -beta * ln(mean(exp(-sinr/beta))). Computed in
// shifted form (min subtracted before exponentiation) so small beta cannot
// underflow. Inputs must be finite and > 0.
double eesm_compress(std::span<const double> sinrs, double beta);

// eesm_compress once per CQI level.
std::array<double, kNumCqi> effective_sinr_all_cqi(std::span<const double> slot_sinrs,
                                                   const CqiTable& table);

// Logistic AWGN reference curve in dB: 0.5 at bler_mid_db, decreasing in SINR,
// increasing in CQI index at fixed SINR.
double bler(int cqi_index, double eff_sinr, const CqiTable& table);

// Largest index whose effective SINR keeps BLER at or under the target;
// 0 when no index qualifies (out-of-range report).
int select_cqi(std::span<const double> per_cqi_sinr, const CqiTable& table);

// Same rule with one scalar checked against every curve. Non-positive inputs
// select 0 (no transmission).
int select_cqi_scalar(double eff_sinr, const CqiTable& table);

struct Standardizer {
  double mean = 0.0;
  double std = 1.0;
  double apply(double x) const { return (x - mean) / std; }
  double invert(double y) const { return y * std + mean; }
};

// Population mean / standard deviation of the series.
Standardizer fit_standardizer(std::span<const double> series);

// (x - mean) / std elementwise; std <= 0 throws std::domain_error.
std::vector<double> standardize(std::span<const double> series, const Standardizer& s);
std::vector<double> destandardize(std::span<const double> series, const Standardizer& s);

// Per-slot effective SINRs for all CQI levels plus the best-CQI track.
// Standardization statistics are fitted on the leading train_fraction of the
// slots and frozen; a constant training segment degenerates to std = 1
// (pure mean-centering) so downstream consumers stay usable.
struct EffSinrTrace {
  ChannelConfig config;
  std::size_t n_slots = 0;
  std::vector<double> per_cqi;        // [slot * kNumCqi + (cqi-1)], linear
  std::vector<double> best_cqi_sinr;  // linear; CQI 1 track where i* = 0
  std::vector<int> best_cqi_index;    // 0..15
  Standardizer best_stats;
  std::array<Standardizer, kNumCqi> cqi_stats;
  std::size_t train_slots = 0;

  double cqi_track(std::size_t slot, int cqi) const {
    return per_cqi[slot * kNumCqi + static_cast<std::size_t>(cqi - 1)];
  }
  std::span<const double> slot_per_cqi(std::size_t slot) const {
    return {per_cqi.data() + slot * kNumCqi, kNumCqi};
  }
};

EffSinrTrace build_trace(const FadingChannel& channel, const CqiTable& table,
                         double train_fraction = 0.784);
EffSinrTrace build_trace(const SinrGrid& grid, const CqiTable& table,
                         double train_fraction = 0.784);

// CSV columns: slot, gamma_eff_cqi_1..15 (dB), best_cqi, gamma_eff_best (dB).
void write_trace_csv(const EffSinrTrace& trace, const std::string& path);

}  // namespace csipred
