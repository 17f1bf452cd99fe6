#include "csipred/channel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>

#include "csipred/csvio.hpp"
#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary grid dumps assume a little-endian host");

namespace csipred {

namespace {

constexpr double kPi = std::numbers::pi;

double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(splitmix64(seed) + a + 1) + b + 1);
}

struct TapShape {
  double delay;     // in pre-normalization units
  double power_db;
  double k_db;      // -inf marks a diffuse-only tap
};

constexpr double kNoLos = -std::numeric_limits<double>::infinity();

// Condensed five-tap shapes per profile: a dominant early cluster plus weak
// tail echoes. Delays get rescaled so the rms delay spread equals the
// requested value; powers get normalized to sum 1.
const std::vector<TapShape>& profile_shape(const std::string& name) {
  static const std::vector<TapShape> tdl_a = {
      {0.00, 0.0, kNoLos}, {0.15, -2.0, kNoLos}, {1.20, -9.0, kNoLos},
      {3.50, -14.0, kNoLos}, {7.00, -19.0, kNoLos}};
  static const std::vector<TapShape> tdl_b = {
      {0.00, 0.0, kNoLos}, {0.20, -1.0, kNoLos}, {1.00, -7.0, kNoLos},
      {3.00, -11.5, kNoLos}, {6.00, -16.0, kNoLos}};
  static const std::vector<TapShape> tdl_c = {
      {0.00, 0.0, kNoLos}, {0.12, -2.5, kNoLos}, {1.40, -10.0, kNoLos},
      {4.00, -15.5, kNoLos}, {8.00, -20.0, kNoLos}};
  static const std::vector<TapShape> tdl_d = {
      {0.00, -0.2, 13.3}, {0.20, -13.0, kNoLos}, {0.80, -17.0, kNoLos},
      {1.70, -20.5, kNoLos}, {3.00, -23.5, kNoLos}};
  static const std::vector<TapShape> tdl_e = {
      {0.00, -0.03, 22.0}, {0.25, -15.5, kNoLos}, {0.90, -18.5, kNoLos},
      {1.90, -21.0, kNoLos}, {3.30, -24.5, kNoLos}};
  if (name == "tdl-a") return tdl_a;
  if (name == "tdl-b") return tdl_b;
  if (name == "tdl-c") return tdl_c;
  if (name == "tdl-d") return tdl_d;
  if (name == "tdl-e") return tdl_e;
  std::string known;
  for (const auto& n : pdp_profile_names()) known += (known.empty() ? "" : ", ") + n;
  throw std::invalid_argument("unknown power-delay profile '" + name +
                              "' (known: " + known + ")");
}

void reject_unknown_keys(const nlohmann::json& obj,
                         std::initializer_list<const char*> allowed,
                         const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed) ok = ok || (it.key() == k);
    if (!ok) throw std::invalid_argument("unknown key '" + it.key() + "' in " + where);
  }
}

}  // namespace

void PowerDelayProfile::validate() const {
  if (taps.empty()) throw std::invalid_argument("profile '" + name + "' has no taps");
  if (!(delay_spread_s > 0.0) || !std::isfinite(delay_spread_s))
    throw std::invalid_argument("profile '" + name + "' has invalid delay spread");
  double sum = 0.0;
  for (std::size_t t = 0; t < taps.size(); ++t) {
    const PdpTap& tap = taps[t];
    if (!std::isfinite(tap.delay_s) || tap.delay_s < 0.0)
      throw std::invalid_argument("profile '" + name + "': negative or non-finite tap delay");
    if (t > 0 && !(tap.delay_s > taps[t - 1].delay_s))
      throw std::invalid_argument("profile '" + name + "': tap delays must be strictly increasing");
    if (!std::isfinite(tap.power) || !(tap.power > 0.0))
      throw std::invalid_argument("profile '" + name + "': tap powers must be positive");
    if (!std::isfinite(tap.rician_k) || tap.rician_k < 0.0)
      throw std::invalid_argument("profile '" + name + "': K-factor must be >= 0");
    if (t > 0 && tap.rician_k > 0.0)
      throw std::invalid_argument("profile '" + name + "': K-factor allowed on the first tap only");
    sum += tap.power;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("profile '" + name + "': tap powers must sum to 1");
}

std::vector<std::string> pdp_profile_names() {
  return {"tdl-a", "tdl-b", "tdl-c", "tdl-d", "tdl-e"};
}

PowerDelayProfile pdp_profile(const std::string& name, double delay_spread_s) {
  if (!(delay_spread_s > 0.0) || !std::isfinite(delay_spread_s))
    throw std::invalid_argument("delay spread must be positive");
  const auto& shape = profile_shape(name);

  PowerDelayProfile profile;
  profile.name = name;
  profile.delay_spread_s = delay_spread_s;
  double power_sum = 0.0;
  for (const TapShape& s : shape) {
    PdpTap tap;
    tap.delay_s = s.delay;
    tap.power = db_to_linear(s.power_db);
    tap.rician_k = std::isinf(s.k_db) ? 0.0 : db_to_linear(s.k_db);
    power_sum += tap.power;
    profile.taps.push_back(tap);
  }
  for (PdpTap& tap : profile.taps) tap.power /= power_sum;

  // Scale delays so the power-weighted rms spread equals delay_spread_s.
  double mean = 0.0, second = 0.0;
  for (const PdpTap& tap : profile.taps) {
    mean += tap.power * tap.delay_s;
    second += tap.power * tap.delay_s * tap.delay_s;
  }
  const double rms = std::sqrt(std::max(second - mean * mean, 0.0));
  const double scale = delay_spread_s / rms;
  for (PdpTap& tap : profile.taps) tap.delay_s *= scale;

  profile.validate();
  return profile;
}

std::vector<PowerDelayProfile> load_pdp_profiles(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("cannot parse profile file " + path + ": " + e.what());
  }
  if (!doc.is_array())
    throw std::invalid_argument("profile file " + path + " must be a JSON array");

  std::vector<PowerDelayProfile> out;
  for (const auto& entry : doc) {
    reject_unknown_keys(entry, {"name", "delay_spread_ns", "taps"}, "profile entry");
    PowerDelayProfile profile;
    profile.name = entry.at("name").get<std::string>();
    profile.delay_spread_s = entry.value("delay_spread_ns", 300.0) * 1e-9;
    double power_sum = 0.0;
    for (const auto& tap_json : entry.at("taps")) {
      reject_unknown_keys(tap_json, {"delay_ns", "power_db", "rician_k_db"},
                          "tap of profile '" + profile.name + "'");
      PdpTap tap;
      tap.delay_s = tap_json.at("delay_ns").get<double>() * 1e-9;
      tap.power = db_to_linear(tap_json.at("power_db").get<double>());
      const auto& k = tap_json.at("rician_k_db");
      tap.rician_k = k.is_null() ? 0.0 : db_to_linear(k.get<double>());
      power_sum += tap.power;
      profile.taps.push_back(tap);
    }
    if (!(power_sum > 0.0))
      throw std::invalid_argument("profile '" + profile.name + "': no positive tap power");
    for (PdpTap& tap : profile.taps) tap.power /= power_sum;
    profile.validate();
    out.push_back(std::move(profile));
  }
  return out;
}

PowerDelayProfile load_pdp_profile(const std::string& path, const std::string& name) {
  for (auto& p : load_pdp_profiles(path))
    if (p.name == name) return p;
  throw std::invalid_argument("profile '" + name + "' not found in " + path);
}

double ChannelConfig::avg_snr_linear() const { return db_to_linear(avg_snr_db); }

void ChannelConfig::validate() const {
  if (!std::isfinite(doppler_hz) || doppler_hz < 0.0)
    throw std::invalid_argument("doppler_hz must be finite and >= 0");
  if (n_slots < 1) throw std::invalid_argument("n_slots must be >= 1");
  if (!(slot_duration_s > 0.0) || !std::isfinite(slot_duration_s))
    throw std::invalid_argument("slot_duration_s must be positive");
  if (n_layers < 1) throw std::invalid_argument("n_layers must be >= 1");
  if (n_rb < 1) throw std::invalid_argument("n_rb must be >= 1");
  if (!std::isfinite(avg_snr_db)) throw std::invalid_argument("avg_snr_db must be finite");
  profile.validate();
}

std::string ChannelConfig::fingerprint() const {
  std::ostringstream ss;
  ss << "doppler_hz=" << format_double(doppler_hz) << ";n_slots=" << n_slots
     << ";slot_duration_s=" << format_double(slot_duration_s)
     << ";n_layers=" << n_layers << ";n_rb=" << n_rb
     << ";avg_snr_db=" << format_double(avg_snr_db) << ";profile=" << profile.name
     << ";delay_spread_s=" << format_double(profile.delay_spread_s)
     << ";seed=" << seed;
  return ss.str();
}

std::vector<std::complex<double>> generate_tap_process(double doppler_hz,
                                                       std::size_t n_slots,
                                                       double slot_duration_s,
                                                       double rician_k,
                                                       std::uint64_t seed) {
  if (!std::isfinite(doppler_hz) || doppler_hz < 0.0)
    throw std::invalid_argument("doppler_hz must be finite and >= 0");
  if (n_slots < 1) throw std::invalid_argument("n_slots must be >= 1");
  if (!(slot_duration_s > 0.0) || !std::isfinite(slot_duration_s))
    throw std::invalid_argument("slot_duration_s must be positive");
  if (!std::isfinite(rician_k) || rician_k < 0.0)
    throw std::invalid_argument("rician_k must be finite and >= 0");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double w_max = 2.0 * kPi * doppler_hz * slot_duration_s;

  // Stratified arrival angles over (0, pi): cos() is strictly monotone there,
  // so all sinusoid frequencies are distinct and cross terms average out.
  const std::size_t ns = kJakesSinusoids;
  std::vector<std::complex<double>> phasor(ns), rot(ns);
  for (std::size_t s = 0; s < ns; ++s) {
    const double alpha = kPi * (static_cast<double>(s) + unif(rng)) / static_cast<double>(ns);
    const double omega = w_max * std::cos(alpha);
    const double phi = 2.0 * kPi * unif(rng);
    phasor[s] = std::polar(1.0, phi);
    rot[s] = std::polar(1.0, omega);
  }
  const double alpha_los = kPi * unif(rng);
  std::complex<double> los = std::polar(1.0, 2.0 * kPi * unif(rng));
  const std::complex<double> los_rot = std::polar(1.0, w_max * std::cos(alpha_los));

  const double diffuse_amp = std::sqrt(1.0 / ((1.0 + rician_k) * static_cast<double>(ns)));
  const double los_amp = std::sqrt(rician_k / (1.0 + rician_k));

  std::vector<std::complex<double>> out(n_slots);
  for (std::size_t n = 0; n < n_slots; ++n) {
    std::complex<double> sum{0.0, 0.0};
    for (std::size_t s = 0; s < ns; ++s) {
      sum += phasor[s];
      phasor[s] *= rot[s];
    }
    out[n] = diffuse_amp * sum + los_amp * los;
    los *= los_rot;
  }
  return out;
}

FadingChannel::FadingChannel(const ChannelConfig& config) : config_(config) {
  config_.validate();
  n_taps_ = config_.profile.taps.size();
  snr_linear_ = config_.avg_snr_linear();

  tap_gains_.resize(config_.n_layers * n_taps_);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    for (std::size_t t = 0; t < n_taps_; ++t) {
      tap_gains_[l * n_taps_ + t] = generate_tap_process(
          config_.doppler_hz, config_.n_slots, config_.slot_duration_s,
          config_.profile.taps[t].rician_k, derive_seed(config_.seed, l, t));
    }
  }

  rb_phasors_.resize(n_taps_ * config_.n_rb);
  for (std::size_t t = 0; t < n_taps_; ++t) {
    const PdpTap& tap = config_.profile.taps[t];
    const double amp = std::sqrt(tap.power);
    for (std::size_t m = 0; m < config_.n_rb; ++m) {
      const double f_center = (static_cast<double>(m) + 0.5) * kRbBandwidthHz;
      rb_phasors_[t * config_.n_rb + m] =
          std::polar(amp, -2.0 * kPi * f_center * tap.delay_s);
    }
  }
}

void FadingChannel::slot_sinrs(std::size_t slot, std::span<double> out) const {
  if (slot >= config_.n_slots) throw std::out_of_range("slot index out of range");
  if (out.size() != slot_size()) throw std::invalid_argument("output span size mismatch");

  const std::size_t n_rb = config_.n_rb;
  std::vector<std::complex<double>> row(n_rb);
  for (std::size_t l = 0; l < config_.n_layers; ++l) {
    std::fill(row.begin(), row.end(), std::complex<double>{0.0, 0.0});
    for (std::size_t t = 0; t < n_taps_; ++t) {
      const std::complex<double> g = tap_gains_[l * n_taps_ + t][slot];
      const std::complex<double>* ph = &rb_phasors_[t * n_rb];
      for (std::size_t m = 0; m < n_rb; ++m) row[m] += g * ph[m];
    }
    for (std::size_t m = 0; m < n_rb; ++m)
      out[l * n_rb + m] = snr_linear_ * std::norm(row[m]);
  }
}

SinrGrid generate_sinr_grid(const ChannelConfig& config, std::size_t max_bytes) {
  config.validate();
  const std::size_t n_values = config.n_slots * config.n_layers * config.n_rb;
  if (n_values * sizeof(double) > max_bytes) {
    std::ostringstream ss;
    ss << "SINR grid of " << config.n_slots << "x" << config.n_layers << "x"
       << config.n_rb << " doubles exceeds the memory budget of " << max_bytes
       << " bytes";
    throw std::runtime_error(ss.str());
  }

  FadingChannel channel(config);
  SinrGrid grid;
  grid.config = config;
  grid.values.resize(n_values);
  const std::size_t stride = channel.slot_size();
  for (std::size_t n = 0; n < config.n_slots; ++n)
    channel.slot_sinrs(n, {grid.values.data() + n * stride, stride});
  return grid;
}

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

constexpr char kGridMagic[8] = {'C', 'S', 'I', 'P', 'G', 'R', 'I', 'D'};

}  // namespace

void SinrGrid::write_binary(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out.write(kGridMagic, sizeof(kGridMagic));
  put<std::uint32_t>(out, 1u);
  put<std::uint64_t>(out, config.n_slots);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(config.n_layers));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(config.n_rb));
  put<double>(out, config.doppler_hz);
  put<double>(out, config.slot_duration_s);
  put<double>(out, config.avg_snr_db);
  put<std::uint64_t>(out, config.seed);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
  if (!out) throw std::runtime_error("write failed: " + path);
}

SinrGrid SinrGrid::read_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kGridMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a SINR grid dump: " + path);
  const auto version = get<std::uint32_t>(in);
  if (version != 1u) throw std::runtime_error("unsupported grid dump version");

  SinrGrid grid;
  grid.config.n_slots = get<std::uint64_t>(in);
  grid.config.n_layers = get<std::uint32_t>(in);
  grid.config.n_rb = get<std::uint32_t>(in);
  grid.config.doppler_hz = get<double>(in);
  grid.config.slot_duration_s = get<double>(in);
  grid.config.avg_snr_db = get<double>(in);
  grid.config.seed = get<std::uint64_t>(in);
  // The power-delay profile is not embedded in the dump; keep a placeholder
  // so dimension-dependent accessors work.
  grid.config.profile = pdp_profile("tdl-a");

  const std::size_t n = grid.config.n_slots * grid.config.n_layers * grid.config.n_rb;
  grid.values.resize(n);
  in.read(reinterpret_cast<char*>(grid.values.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("truncated grid dump: " + path);
  return grid;
}

}  // namespace csipred
