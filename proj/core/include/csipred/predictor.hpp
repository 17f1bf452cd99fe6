// Shared predictor contract: input windows, TDD/FDD output shapes, target
// strategies, the ZOH baseline, interpolation preprocessing and FLOPs
// accounting.
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace csipred {

enum class PredictorKind { zoh, wiener, dnn, gru, lstm };
enum class PredictionMode { tdd_vector, fdd_scalar };
enum class TargetStrategy { best_cqi, by_cqi };

std::string to_string(PredictorKind kind);
std::string to_string(PredictionMode mode);
std::string to_string(TargetStrategy target);
PredictorKind predictor_kind_from_string(const std::string& name);
PredictionMode prediction_mode_from_string(const std::string& name);
TargetStrategy target_strategy_from_string(const std::string& name);

struct PredictorSpec {
  PredictorKind kind = PredictorKind::zoh;
  std::size_t input_len = 4;    // P, samples spaced t_csi slots apart
  std::size_t hidden = 16;      // D, neural kinds only
  std::size_t t_csi = 4;        // CSI reporting period in slots
  PredictionMode mode = PredictionMode::tdd_vector;
  std::size_t fdd_horizon = 1;  // tau-breve, fdd_scalar only
  TargetStrategy target = TargetStrategy::best_cqi;

  std::size_t output_len() const {
    return mode == PredictionMode::tdd_vector ? t_csi - 1 : 1;
  }
  bool is_neural() const {
    return kind == PredictorKind::dnn || kind == PredictorKind::gru ||
           kind == PredictorKind::lstm;
  }
  void validate() const;  // throws std::invalid_argument
};

// Windows over a standardized slot series. Row r of inputs holds the P report
// samples most recent first: series[t_csi*k], series[t_csi*(k-1)], ...
// Targets cover the slots of the following transmission interval.
struct PredictionBatch {
  std::size_t input_len = 0;
  std::size_t t_csi = 0;
  std::vector<double> inputs;       // [n_windows x input_len]
  std::vector<double> targets_tdd;  // [n_windows x (t_csi-1)]
  std::vector<double> targets_fdd;  // [n_windows], fdd mode only
  std::vector<std::size_t> slot_index;  // t_csi * k per window

  std::size_t n_windows() const { return slot_index.size(); }
  std::span<const double> input_row(std::size_t r) const {
    return {inputs.data() + r * input_len, input_len};
  }
  std::span<const double> tdd_target_row(std::size_t r) const {
    return {targets_tdd.data() + r * (t_csi - 1), t_csi - 1};
  }
};

// Builds every window whose inputs and full future targets lie inside the
// series; trailing partial windows are dropped. Throws std::length_error with
// the required minimum when the series is shorter than t_csi * input_len.
PredictionBatch build_windows(std::span<const double> series, const PredictorSpec& spec);

// Every predicted entry equals the newest sample, exactly.
std::vector<double> zoh_predict(std::span<const double> window, std::size_t output_len);

enum class InterpMethod { linear, lmmse };

// Densifies samples taken at slot multiples of t_csi to every slot
// (output length (n_sparse-1)*t_csi + 1). linear draws straight lines between
// adjacent samples; lmmse solves the order-2 normal equations on the two
// bracketing samples using autocorr(lag_in_slots). Sample slots reproduce the
// samples exactly.
std::vector<double> interpolate(std::span<const double> sparse, std::size_t t_csi,
                                InterpMethod method,
                                const std::function<double(std::size_t)>& autocorr = {});

// Closed-form inference cost. Per output horizon the Wiener filter costs
// 2P-1; DNN costs 2D(P + out); GRU costs P(6D^2+11D) + 2D*out; LSTM costs
// P(8D^2+12D) + 2D*out; ZOH costs 0. by-CQI multiplies by 15.
std::uint64_t predictor_flops(const PredictorSpec& spec);

// CSV exchange format: comment line, then k,slot,x_0..x_{P-1},y_1..y_{T-1}.
void write_batch_csv(const PredictionBatch& batch, const std::string& path,
                     std::uint64_t config_hash = 0, std::uint64_t seed = 0);
PredictionBatch read_batch_csv(const std::string& path);

}  // namespace csipred
