// Tapped-delay-line Rayleigh/Rician fading with Jakes (Clarke) Doppler dynamics
// and per-RB SINR grid generation.
#pragma once

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace csipred {

// 5G NR numerology 0 constants used by the grid.
inline constexpr double kSubcarrierSpacingHz = 15e3;
inline constexpr int kSubcarriersPerRb = 12;
inline constexpr int kSymbolsPerSlot = 14;
inline constexpr double kRbBandwidthHz = kSubcarrierSpacingHz * kSubcarriersPerRb;

// Sum-of-sinusoids order for the Jakes generator.
inline constexpr std::size_t kJakesSinusoids = 64;

struct PdpTap {
  double delay_s = 0.0;   // tap delay, seconds
  double power = 1.0;     // linear tap power; taps of a profile sum to 1
  double rician_k = 0.0;  // linear Rician K-factor, 0 for diffuse-only taps
};

struct PowerDelayProfile {
  std::string name;
  std::vector<PdpTap> taps;
  double delay_spread_s = 300e-9;  // rms delay spread the tap delays realize

  // Throws std::invalid_argument if powers do not sum to 1, delays are not
  // strictly increasing, or a K-factor appears outside the first tap.
  void validate() const;
};

// Built-in five-tap profiles (tdl-a|tdl-b|tdl-c|tdl-d|tdl-e). Tap delays are
// scaled so the power-weighted rms delay spread equals delay_spread_s.
// Unknown names throw std::invalid_argument.
PowerDelayProfile pdp_profile(const std::string& name, double delay_spread_s = 300e-9);
std::vector<std::string> pdp_profile_names();

// Profile file support. A file is a JSON array of objects with keys
// name, delay_spread_ns (optional), taps[].delay_ns, taps[].power_db,
// taps[].rician_k_db (null for no LOS component). Powers are renormalized
// to sum to 1 on load; unknown keys are rejected.
std::vector<PowerDelayProfile> load_pdp_profiles(const std::string& path);
PowerDelayProfile load_pdp_profile(const std::string& path, const std::string& name);

struct ChannelConfig {
  double doppler_hz = 10.0;
  std::size_t n_slots = 0;
  double slot_duration_s = 1e-3;
  std::size_t n_layers = 4;
  std::size_t n_rb = 52;
  double avg_snr_db = 12.5;
  PowerDelayProfile profile;
  std::uint64_t seed = 1;

  double avg_snr_linear() const;
  void validate() const;  // throws std::invalid_argument
  // Canonical key=value rendering, used for config hashing in exports.
  std::string fingerprint() const;
};

struct SinrGrid {
  ChannelConfig config;
  std::vector<double> values;  // [slot][layer][rb] row-major, linear SINR

  double at(std::size_t slot, std::size_t layer, std::size_t rb) const {
    return values[(slot * config.n_layers + layer) * config.n_rb + rb];
  }
  std::span<const double> slot(std::size_t n) const {
    const std::size_t stride = config.n_layers * config.n_rb;
    return {values.data() + n * stride, stride};
  }

  // Binary dump: 8-byte magic "CSIPGRID", u32 version, u64 n_slots,
  // u32 n_layers, u32 n_rb, f64 doppler_hz, f64 slot_duration_s,
  // f64 avg_snr_db, u64 seed, then row-major f64 values. Little-endian.
  void write_binary(const std::string& path) const;
  static SinrGrid read_binary(const std::string& path);
};

// One complex tap gain sequence. Diffuse part is a 64-sinusoid Jakes process
// with unit mean power; rician_k > 0 adds a LOS phasor so total mean power
// stays 1. doppler_hz = 0 yields a constant sequence. Deterministic in seed.
std::vector<std::complex<double>> generate_tap_process(double doppler_hz,
                                                       std::size_t n_slots,
                                                       double slot_duration_s,
                                                       double rician_k,
                                                       std::uint64_t seed);

// Holds the per-layer, per-tap gain sequences and evaluates per-slot SINRs on
// demand, so long runs never materialize the full grid. Layers fade
// independently. Immutable after construction.
class FadingChannel {
 public:
  explicit FadingChannel(const ChannelConfig& config);

  const ChannelConfig& config() const { return config_; }
  std::size_t n_slots() const { return config_.n_slots; }
  std::size_t slot_size() const { return config_.n_layers * config_.n_rb; }

  // Fills out (layer-major, n_layers*n_rb values) with linear SINRs:
  // SINR(l, m) = avg_snr_linear * |H_l(slot, m)|^2, where H is the tap sum
  // evaluated at the RB center frequency (m + 0.5) * 180 kHz.
  void slot_sinrs(std::size_t slot, std::span<double> out) const;

 private:
  ChannelConfig config_;
  std::size_t n_taps_ = 0;
  // tap_gains_[layer * n_taps + tap] is a length-n_slots sequence.
  std::vector<std::vector<std::complex<double>>> tap_gains_;
  // rb_phasors_[tap * n_rb + m] = sqrt(tap power) * exp(-j 2 pi f_m delay).
  std::vector<std::complex<double>> rb_phasors_;
  double snr_linear_ = 1.0;
};

inline constexpr std::size_t kDefaultGridMemoryBudget = 2ull << 30;  // bytes

// Materializes the full grid. Throws std::runtime_error when the value tensor
// would exceed max_bytes.
SinrGrid generate_sinr_grid(const ChannelConfig& config,
                            std::size_t max_bytes = kDefaultGridMemoryBudget);

}  // namespace csipred
