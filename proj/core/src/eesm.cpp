#include "csipred/eesm.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "csipred/csvio.hpp"
#include "json.hpp"

namespace csipred {

namespace {

double to_db(double linear) { return 10.0 * std::log10(linear); }

void check_positive_finite(double v, const char* what) {
  if (!std::isfinite(v) || !(v > 0.0)) {
    std::ostringstream ss;
    ss << what << " must be finite and > 0, got " << v;
    throw std::domain_error(ss.str());
  }
}

}  // namespace

void CqiTable::validate() const {
  if (!(bler_target > 0.0) || !(bler_target < 1.0))
    throw std::invalid_argument("bler_target must lie in (0, 1)");
  for (int i = 1; i <= kNumCqi; ++i) {
    const CqiEntry& e = entry(i);
    if (!std::isfinite(e.beta) || !(e.beta > 0.0))
      throw std::invalid_argument("CQI table: beta must be > 0");
    if (!std::isfinite(e.bler_mid_db))
      throw std::invalid_argument("CQI table: bler_mid_db must be finite");
    if (!std::isfinite(e.bler_slope) || !(e.bler_slope > 0.0))
      throw std::invalid_argument("CQI table: bler_slope must be > 0");
    if (!std::isfinite(e.spectral_eff) || !(e.spectral_eff > 0.0))
      throw std::invalid_argument("CQI table: spectral_eff must be > 0");
    if (i > 1) {
      const CqiEntry& prev = entry(i - 1);
      if (!(e.beta > prev.beta))
        throw std::invalid_argument("CQI table: beta must be strictly increasing");
      if (!(e.bler_mid_db > prev.bler_mid_db))
        throw std::invalid_argument("CQI table: bler_mid_db must be strictly increasing");
      if (!(e.spectral_eff > prev.spectral_eff))
        throw std::invalid_argument("CQI table: spectral_eff must be strictly increasing");
    }
  }
}

std::string CqiTable::fingerprint() const {
  std::ostringstream ss;
  ss << "bler_target=" << format_double(bler_target);
  for (int i = 1; i <= kNumCqi; ++i) {
    const CqiEntry& e = entry(i);
    ss << ";" << i << ":" << format_double(e.beta) << "," << format_double(e.bler_mid_db)
       << "," << format_double(e.bler_slope) << "," << format_double(e.spectral_eff);
  }
  return ss.str();
}

CqiTable default_cqi_table() {
  // Spectral efficiencies are the standard 15-level CQI table values.
  // Midpoints step 2 dB; beta grows geometrically 1 -> 20. The logistic slope
  // of 5/dB approximates the cliff steepness of coded AWGN BLER curves
  // (roughly 0.9 -> 0.1 within one dB); a softer slope makes CQI
  // mis-selection nearly free and collapses the throughput spread between
  // ideal, predicted and held CSI.
  static constexpr double kSpectralEff[kNumCqi] = {
      0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141,
      2.4063, 2.7305, 3.3223, 3.9023, 4.5234, 5.1152, 5.5547};
  CqiTable table;
  table.bler_target = 0.1;
  for (int i = 1; i <= kNumCqi; ++i) {
    CqiEntry e;
    e.beta = std::pow(20.0, (i - 1) / 14.0);
    e.bler_mid_db = -4.0 + 2.0 * (i - 1);
    e.bler_slope = 5.0;
    e.spectral_eff = kSpectralEff[i - 1];
    table.entries[static_cast<std::size_t>(i - 1)] = e;
  }
  table.validate();
  return table;
}

CqiTable load_cqi_table(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("cannot parse CQI table " + path + ": " + e.what());
  }
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (it.key() != "bler_target" && it.key() != "entries")
      throw std::invalid_argument("unknown key '" + it.key() + "' in CQI table");

  CqiTable table;
  table.bler_target = doc.at("bler_target").get<double>();
  const auto& entries = doc.at("entries");
  if (!entries.is_array() || entries.size() != kNumCqi)
    throw std::invalid_argument("CQI table must have exactly 15 entries");
  for (int i = 0; i < kNumCqi; ++i) {
    const auto& e = entries[static_cast<std::size_t>(i)];
    for (auto it = e.begin(); it != e.end(); ++it)
      if (it.key() != "beta" && it.key() != "bler_mid_db" && it.key() != "bler_slope" &&
          it.key() != "spectral_eff")
        throw std::invalid_argument("unknown key '" + it.key() + "' in CQI table entry");
    table.entries[static_cast<std::size_t>(i)] = {
        e.at("beta").get<double>(), e.at("bler_mid_db").get<double>(),
        e.at("bler_slope").get<double>(), e.at("spectral_eff").get<double>()};
  }
  table.validate();
  return table;
}

double eesm_compress(std::span<const double> sinrs, double beta) {
  if (sinrs.empty()) throw std::domain_error("eesm_compress needs at least one SINR");
  check_positive_finite(beta, "beta");
  double min_sinr = std::numeric_limits<double>::infinity();
  for (double g : sinrs) {
    check_positive_finite(g, "SINR");
    min_sinr = std::min(min_sinr, g);
  }
  double acc = 0.0;
  const double inv_beta = 1.0 / beta;
  for (double g : sinrs) acc += std::exp(-(g - min_sinr) * inv_beta);
  return min_sinr - beta * std::log(acc / static_cast<double>(sinrs.size()));
}

std::array<double, kNumCqi> effective_sinr_all_cqi(std::span<const double> slot_sinrs,
                                                   const CqiTable& table) {
  if (slot_sinrs.empty()) throw std::domain_error("empty SINR slot");
  double min_sinr = std::numeric_limits<double>::infinity();
  for (double g : slot_sinrs) {
    check_positive_finite(g, "SINR");
    min_sinr = std::min(min_sinr, g);
  }
  std::array<double, kNumCqi> out;
  const double inv_n = 1.0 / static_cast<double>(slot_sinrs.size());
  for (int i = 0; i < kNumCqi; ++i) {
    const double beta = table.entries[static_cast<std::size_t>(i)].beta;
    const double inv_beta = 1.0 / beta;
    double acc = 0.0;
    for (double g : slot_sinrs) acc += std::exp(-(g - min_sinr) * inv_beta);
    out[static_cast<std::size_t>(i)] = min_sinr - beta * std::log(acc * inv_n);
  }
  return out;
}

double bler(int cqi_index, double eff_sinr, const CqiTable& table) {
  if (cqi_index < 1 || cqi_index > kNumCqi)
    throw std::domain_error("CQI index must lie in 1..15");
  check_positive_finite(eff_sinr, "effective SINR");
  const CqiEntry& e = table.entry(cqi_index);
  return 1.0 / (1.0 + std::exp(e.bler_slope * (to_db(eff_sinr) - e.bler_mid_db)));
}

int select_cqi(std::span<const double> per_cqi_sinr, const CqiTable& table) {
  if (per_cqi_sinr.size() != kNumCqi)
    throw std::domain_error("per-CQI SINR vector must have 15 entries");
  for (int i = kNumCqi; i >= 1; --i) {
    if (bler(i, per_cqi_sinr[static_cast<std::size_t>(i - 1)], table) <= table.bler_target)
      return i;
  }
  return 0;
}

int select_cqi_scalar(double eff_sinr, const CqiTable& table) {
  if (!std::isfinite(eff_sinr) || !(eff_sinr > 0.0)) return 0;
  for (int i = kNumCqi; i >= 1; --i)
    if (bler(i, eff_sinr, table) <= table.bler_target) return i;
  return 0;
}

Standardizer fit_standardizer(std::span<const double> series) {
  if (series.empty()) throw std::domain_error("cannot fit statistics on an empty series");
  double mean = 0.0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(series.size());
  double var = 0.0;
  for (double v : series) var += (v - mean) * (v - mean);
  var /= static_cast<double>(series.size());
  return {mean, std::sqrt(var)};
}

std::vector<double> standardize(std::span<const double> series, const Standardizer& s) {
  if (!(s.std > 0.0) || !std::isfinite(s.std))
    throw std::domain_error("standardization requires std > 0");
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) out[i] = s.apply(series[i]);
  return out;
}

std::vector<double> destandardize(std::span<const double> series, const Standardizer& s) {
  if (!(s.std > 0.0) || !std::isfinite(s.std))
    throw std::domain_error("destandardization requires std > 0");
  std::vector<double> out(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) out[i] = s.invert(series[i]);
  return out;
}

namespace {

Standardizer fit_with_fallback(std::span<const double> series) {
  Standardizer s = fit_standardizer(series);
  // An (effectively) constant training segment degenerates to mean-centering;
  // the relative threshold absorbs summation noise on bit-constant tracks.
  if (!(s.std > 1e-12 * std::max(std::abs(s.mean), 1.0))) s.std = 1.0;
  return s;
}

EffSinrTrace build_trace_impl(const ChannelConfig& config, std::size_t n_slots,
                              const CqiTable& table, double train_fraction,
                              const std::function<std::span<const double>(std::size_t)>& slot_of) {
  table.validate();
  if (!(train_fraction > 0.0) || train_fraction > 1.0)
    throw std::invalid_argument("train_fraction must lie in (0, 1]");

  EffSinrTrace trace;
  trace.config = config;
  trace.n_slots = n_slots;
  trace.per_cqi.resize(n_slots * kNumCqi);
  trace.best_cqi_sinr.resize(n_slots);
  trace.best_cqi_index.resize(n_slots);

  for (std::size_t n = 0; n < n_slots; ++n) {
    const auto eff = effective_sinr_all_cqi(slot_of(n), table);
    std::copy(eff.begin(), eff.end(), trace.per_cqi.begin() + static_cast<std::ptrdiff_t>(n * kNumCqi));
    const int best = select_cqi(eff, table);
    trace.best_cqi_index[n] = best;
    trace.best_cqi_sinr[n] = eff[static_cast<std::size_t>(std::max(best, 1) - 1)];
  }

  trace.train_slots = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n_slots))), 1,
      n_slots);
  trace.best_stats =
      fit_with_fallback({trace.best_cqi_sinr.data(), trace.train_slots});
  std::vector<double> track(trace.train_slots);
  for (int i = 1; i <= kNumCqi; ++i) {
    for (std::size_t n = 0; n < trace.train_slots; ++n) track[n] = trace.cqi_track(n, i);
    trace.cqi_stats[static_cast<std::size_t>(i - 1)] = fit_with_fallback(track);
  }
  return trace;
}

}  // namespace

EffSinrTrace build_trace(const FadingChannel& channel, const CqiTable& table,
                         double train_fraction) {
  std::vector<double> slot(channel.slot_size());
  return build_trace_impl(channel.config(), channel.n_slots(), table, train_fraction,
                          [&](std::size_t n) -> std::span<const double> {
                            channel.slot_sinrs(n, slot);
                            return slot;
                          });
}

EffSinrTrace build_trace(const SinrGrid& grid, const CqiTable& table, double train_fraction) {
  return build_trace_impl(grid.config, grid.config.n_slots, table, train_fraction,
                          [&](std::size_t n) { return grid.slot(n); });
}

void write_trace_csv(const EffSinrTrace& trace, const std::string& path) {
  std::string out;
  out += csv_comment(fnv1a_hash(trace.config.fingerprint()), trace.config.seed) + "\n";
  out += "slot";
  for (int i = 1; i <= kNumCqi; ++i) out += ",gamma_eff_cqi_" + std::to_string(i) + "_db";
  out += ",best_cqi,gamma_eff_best_db\n";
  for (std::size_t n = 0; n < trace.n_slots; ++n) {
    out += std::to_string(n);
    for (int i = 1; i <= kNumCqi; ++i) out += "," + format_double(to_db(trace.cqi_track(n, i)));
    out += "," + std::to_string(trace.best_cqi_index[n]);
    out += "," + format_double(to_db(trace.best_cqi_sinr[n])) + "\n";
  }
  write_file_atomic(path, out);
}

}  // namespace csipred
