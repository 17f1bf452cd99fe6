// Experiment configuration and the sweep engine behind the CLI: dataset
// generation, model training, and per-figure CSV production.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "csipred/neural.hpp"
#include "csipred/predictor.hpp"
#include "csipred/simulation.hpp"

namespace csipred {

struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string cqi_table_path;  // empty = built-in default table
  CqiTable cqi_table;

  ChannelConfig channel;  // n_slots here is the evaluation-trace length
  std::array<double, 3> split{0.784, 0.196, 0.02};
  std::vector<PredictorSpec> predictors;
  TrainConfig train;

  struct Sweep {
    std::vector<double> doppler_hz{5.0, 10.0, 20.0};
    std::vector<std::size_t> t_csi{4, 32, 40};
    std::vector<std::size_t> fdd_horizons{2, 8, 16, 24, 31};
    std::vector<std::size_t> hidden{4, 8, 16, 32};
    std::vector<std::size_t> input_len{1, 2, 3, 4, 5, 6, 7};
    std::size_t train_windows = 12000;  // desk-scale dataset size per point
    std::size_t eval_intervals = 300;
  } sweep;

  std::string fingerprint() const;
};

// Strict loader: unknown keys anywhere are errors, referenced paths must
// exist. Relative paths resolve against the config file's directory.
ExperimentConfig load_experiment_config(const std::string& path);

// Valid --figure keys for cmd_sweep.
std::vector<std::string> sweep_figure_keys();

// generate: datasets + manifest under <out>/dataset.
void cmd_generate(const ExperimentConfig& config);

// train: one checkpoint + loss history per neural predictor under
// <out>/models.
void cmd_train(const ExperimentConfig& config);

// sweep: plot-ready CSV for one figure key under <out>/sweeps, dispatching
// points over `workers` threads. Returns the written CSV path.
std::string cmd_sweep(const ExperimentConfig& config, const std::string& figure,
                      std::size_t workers);

// Convenience: slot count so a trace yields at least n_windows windows.
std::size_t slots_for_windows(std::size_t n_windows, std::size_t t_csi,
                              std::size_t input_len);

}  // namespace csipred
