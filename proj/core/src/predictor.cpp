#include "csipred/predictor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "csipred/csvio.hpp"

namespace csipred {

std::string to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::zoh: return "zoh";
    case PredictorKind::wiener: return "wiener";
    case PredictorKind::dnn: return "dnn";
    case PredictorKind::gru: return "gru";
    case PredictorKind::lstm: return "lstm";
  }
  throw std::domain_error("unknown predictor kind");
}

std::string to_string(PredictionMode mode) {
  return mode == PredictionMode::tdd_vector ? "tdd_vector" : "fdd_scalar";
}

std::string to_string(TargetStrategy target) {
  return target == TargetStrategy::best_cqi ? "best_cqi" : "by_cqi";
}

PredictorKind predictor_kind_from_string(const std::string& name) {
  if (name == "zoh") return PredictorKind::zoh;
  if (name == "wiener") return PredictorKind::wiener;
  if (name == "dnn") return PredictorKind::dnn;
  if (name == "gru") return PredictorKind::gru;
  if (name == "lstm") return PredictorKind::lstm;
  throw std::invalid_argument("unknown predictor kind '" + name +
                              "' (expected zoh|wiener|dnn|gru|lstm)");
}

PredictionMode prediction_mode_from_string(const std::string& name) {
  if (name == "tdd_vector") return PredictionMode::tdd_vector;
  if (name == "fdd_scalar") return PredictionMode::fdd_scalar;
  throw std::invalid_argument("unknown prediction mode '" + name + "'");
}

TargetStrategy target_strategy_from_string(const std::string& name) {
  if (name == "best_cqi") return TargetStrategy::best_cqi;
  if (name == "by_cqi") return TargetStrategy::by_cqi;
  throw std::invalid_argument("unknown target strategy '" + name + "'");
}

void PredictorSpec::validate() const {
  if (input_len < 1) throw std::invalid_argument("input_len must be >= 1");
  if (t_csi < 2) throw std::invalid_argument("t_csi must be >= 2");
  if (mode == PredictionMode::fdd_scalar &&
      (fdd_horizon < 1 || fdd_horizon > t_csi - 1))
    throw std::invalid_argument("fdd_horizon must lie in [1, t_csi-1]");
  if (is_neural() && hidden < 1)
    throw std::invalid_argument("hidden must be >= 1 for neural kinds");
}

PredictionBatch build_windows(std::span<const double> series, const PredictorSpec& spec) {
  spec.validate();
  const std::size_t p = spec.input_len;
  const std::size_t t = spec.t_csi;
  const std::size_t min_len = t * p;
  if (series.size() < min_len) {
    std::ostringstream ss;
    ss << "series of " << series.size() << " slots is too short; need at least "
       << min_len << " (t_csi * input_len)";
    throw std::length_error(ss.str());
  }

  const std::size_t k_min = p - 1;
  const std::size_t k_max = (series.size() - t) / t;  // t*k + t - 1 <= size-1
  PredictionBatch batch;
  batch.input_len = p;
  batch.t_csi = t;
  const std::size_t n = k_max - k_min + 1;
  batch.inputs.reserve(n * p);
  batch.targets_tdd.reserve(n * (t - 1));
  batch.slot_index.reserve(n);
  if (spec.mode == PredictionMode::fdd_scalar) batch.targets_fdd.reserve(n);

  for (std::size_t k = k_min; k <= k_max; ++k) {
    const std::size_t n0 = t * k;
    batch.slot_index.push_back(n0);
    for (std::size_t i = 0; i < p; ++i) batch.inputs.push_back(series[n0 - t * i]);
    for (std::size_t tau = 1; tau < t; ++tau) batch.targets_tdd.push_back(series[n0 + tau]);
    if (spec.mode == PredictionMode::fdd_scalar)
      batch.targets_fdd.push_back(series[n0 + spec.fdd_horizon]);
  }
  return batch;
}

std::vector<double> zoh_predict(std::span<const double> window, std::size_t output_len) {
  if (window.empty()) throw std::invalid_argument("empty input window");
  return std::vector<double>(output_len, window[0]);
}

std::vector<double> interpolate(std::span<const double> sparse, std::size_t t_csi,
                                InterpMethod method,
                                const std::function<double(std::size_t)>& autocorr) {
  if (sparse.size() < 2) throw std::invalid_argument("interpolation needs >= 2 samples");
  if (t_csi < 1) throw std::invalid_argument("t_csi must be >= 1");
  if (method == InterpMethod::lmmse && !autocorr)
    throw std::invalid_argument("lmmse interpolation requires an autocorrelation function");

  std::vector<double> dense((sparse.size() - 1) * t_csi + 1);
  for (std::size_t j = 0; j + 1 < sparse.size(); ++j) {
    const double a = sparse[j];
    const double b = sparse[j + 1];
    dense[j * t_csi] = a;
    for (std::size_t s = 1; s < t_csi; ++s) {
      if (method == InterpMethod::linear) {
        const double frac = static_cast<double>(s) / static_cast<double>(t_csi);
        dense[j * t_csi + s] = a + frac * (b - a);
      } else {
        // Order-2 LMMSE on the bracketing samples:
        //   [R(0) R(g); R(g) R(0)] w = [R(s); R(g-s)], g = t_csi.
        const double r0 = autocorr(0);
        const double rg = autocorr(t_csi);
        const double ra = autocorr(s);
        const double rb = autocorr(t_csi - s);
        double det = r0 * r0 - rg * rg;
        double load = 0.0;
        if (std::abs(det) < 1e-12 * r0 * r0) {
          load = 1e-9 * std::abs(r0) + 1e-30;
          det = (r0 + load) * (r0 + load) - rg * rg;
        }
        const double w0 = ((r0 + load) * ra - rg * rb) / det;
        const double w1 = ((r0 + load) * rb - rg * ra) / det;
        dense[j * t_csi + s] = w0 * a + w1 * b;
      }
    }
  }
  dense.back() = sparse.back();
  return dense;
}

std::uint64_t predictor_flops(const PredictorSpec& spec) {
  spec.validate();
  const std::uint64_t p = spec.input_len;
  const std::uint64_t d = spec.hidden;
  const std::uint64_t out = spec.output_len();
  std::uint64_t flops = 0;
  switch (spec.kind) {
    case PredictorKind::zoh: flops = 0; break;
    case PredictorKind::wiener: flops = out * (2 * p - 1); break;
    case PredictorKind::dnn: flops = 2 * d * (p + out); break;
    case PredictorKind::gru: flops = p * (6 * d * d + 11 * d) + 2 * d * out; break;
    case PredictorKind::lstm: flops = p * (8 * d * d + 12 * d) + 2 * d * out; break;
  }
  if (spec.target == TargetStrategy::by_cqi) flops *= 15;
  return flops;
}

void write_batch_csv(const PredictionBatch& batch, const std::string& path,
                     std::uint64_t config_hash, std::uint64_t seed) {
  std::string out = csv_comment(config_hash, seed) + "\n";
  out += "k,slot";
  for (std::size_t i = 0; i < batch.input_len; ++i) out += ",x_" + std::to_string(i);
  for (std::size_t tau = 1; tau < batch.t_csi; ++tau) out += ",y_" + std::to_string(tau);
  out += "\n";
  for (std::size_t r = 0; r < batch.n_windows(); ++r) {
    out += std::to_string(batch.slot_index[r] / batch.t_csi);
    out += "," + std::to_string(batch.slot_index[r]);
    for (double v : batch.input_row(r)) out += "," + format_double(v);
    for (double v : batch.tdd_target_row(r)) out += "," + format_double(v);
    out += "\n";
  }
  write_file_atomic(path, out);
}

PredictionBatch read_batch_csv(const std::string& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    header = split_csv_line(line);
    break;
  }
  if (header.size() < 4 || header[0] != "k" || header[1] != "slot")
    throw std::runtime_error("not a prediction batch CSV: " + path);

  std::size_t p = 0, horizons = 0;
  for (const auto& h : header) {
    if (h.rfind("x_", 0) == 0) ++p;
    if (h.rfind("y_", 0) == 0) ++horizons;
  }
  if (p == 0 || horizons == 0 || header.size() != 2 + p + horizons)
    throw std::runtime_error("malformed batch CSV header: " + path);

  PredictionBatch batch;
  batch.input_len = p;
  batch.t_csi = horizons + 1;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw std::runtime_error("malformed batch CSV row: " + path);
    batch.slot_index.push_back(static_cast<std::size_t>(std::stoull(fields[1])));
    for (std::size_t i = 0; i < p; ++i) batch.inputs.push_back(std::stod(fields[2 + i]));
    for (std::size_t tau = 0; tau < horizons; ++tau)
      batch.targets_tdd.push_back(std::stod(fields[2 + p + tau]));
  }
  return batch;
}

}  // namespace csipred
