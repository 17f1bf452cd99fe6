// From-scratch dense/GRU/LSTM predictors: forward passes, reverse-mode
// gradients (backpropagation through time), adaptive-moment training and an
// instrumented FLOPs tally.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csipred/predictor.hpp"

namespace csipred {

// Parameters live in one flat vector. Layouts (row-major matrices):
//   dnn : W1[DxP], b1[D], W2[outxD], b2[out]
//   gru : per gate g in (update, reset, candidate): U_g[D], W_g[DxD], b_g[D];
//         then Wout[outxD], bout[out]
//   lstm: per gate g in (input, forget, candidate, output): U_g[D], W_g[DxD],
//         b_g[D]; then Wout[outxD], bout[out]
// Hidden activations are tanh; recurrent gates are logistic. Recurrent kinds
// consume the window oldest sample first (the adapter reverses the batch
// ordering) with zero initial state.
struct NeuralModel {
  PredictorKind kind = PredictorKind::dnn;
  std::size_t input_len = 0;   // P
  std::size_t hidden = 0;      // D
  std::size_t output_len = 0;  // T_CSI - 1 or 1
  std::uint64_t seed = 0;
  std::vector<double> params;

  std::size_t n_params() const { return params.size(); }
};

std::size_t neural_param_count(PredictorKind kind, std::size_t input_len,
                               std::size_t hidden, std::size_t output_len);

// Weights uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) drawn in layout order,
// biases zero. Deterministic in seed.
NeuralModel init_model(PredictorKind kind, std::size_t input_len, std::size_t hidden,
                       std::size_t output_len, std::uint64_t seed);

// window uses the batch ordering (most recent first).
std::vector<double> forward(const NeuralModel& model, std::span<const double> window);

// Mean of squared errors over the output entries.
double mse_loss(std::span<const double> predictions, std::span<const double> targets);

// Mean per-sample loss over the listed batch rows (all rows when empty).
double batch_loss(const NeuralModel& model, const PredictionBatch& batch);

// Gradient of the batch-mean loss with respect to every parameter, in the
// params layout. Targets come from targets_tdd or targets_fdd depending on
// model.output_len.
std::vector<double> gradients(const NeuralModel& model, const PredictionBatch& batch);

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 2048;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t shuffle_seed = 0;
  // Stop after this many epochs without a validation improvement; 0 disables.
  std::size_t patience = 0;
};

struct TrainResult {
  NeuralModel model;  // parameters of the best validation epoch
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;  // 1-based
};

// Adaptive-moment minimization of the MSE loss. Keeps the parameter snapshot
// with the best validation loss. Deterministic given seeds. Throws
// std::runtime_error naming the epoch if the loss turns non-finite.
TrainResult train(const NeuralModel& model, const PredictionBatch& train_set,
                  const PredictionBatch& val_set, const TrainConfig& config);

// Multiply/add tally of one forward pass under the gate-level counting
// conventions (matrix-vector products 2mn, scalar-input gate contributions 2D,
// element-wise state updates D each, activations free). Matches the closed
// forms in predictor_flops for the equivalent spec.
std::uint64_t count_forward_flops(const NeuralModel& model);

// Text checkpoint: header (kind, dims, seed, param count) + one value/line.
void save_checkpoint(const NeuralModel& model, const std::string& path);
NeuralModel load_checkpoint(const std::string& path);

// CSV: epoch, train_loss, val_loss.
void write_loss_history_csv(const TrainResult& result, const std::string& path,
                            std::uint64_t config_hash = 0, std::uint64_t seed = 0);

}  // namespace csipred
