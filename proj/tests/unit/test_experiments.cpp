#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "csipred/csvio.hpp"
#include "csipred/experiments.hpp"

using namespace csipred;
namespace fs = std::filesystem;

namespace {

// Micro-scale config so sweeps finish in seconds.
const char* kMicroConfig = R"({
  "seed": 5,
  "out_dir": "OUTDIR",
  "channel": {
    "doppler_hz": 10.0,
    "n_slots": 3000,
    "n_layers": 2,
    "n_rb": 12,
    "profile": "tdl-a"
  },
  "predictors": [
    { "kind": "gru", "input_len": 4, "hidden": 4, "t_csi": 4 }
  ],
  "train": { "epochs": 3, "batch_size": 256, "learning_rate": 0.002, "patience": 0 },
  "sweep": {
    "doppler_hz": [10.0],
    "t_csi": [4],
    "fdd_horizons": [2],
    "hidden": [2, 4],
    "input_len": [1, 2],
    "train_windows": 400,
    "eval_intervals": 120
  }
})";

std::string write_micro_config(const std::string& dir) {
  fs::create_directories(dir);
  std::string body(kMicroConfig);
  const std::string out = (fs::path(dir) / "out").string();
  body.replace(body.find("OUTDIR"), 6, out);
  const std::string path = (fs::path(dir) / "config.json").string();
  std::ofstream f(path);
  f << body;
  return path;
}

}  // namespace

TEST_CASE("experiment config loading is strict") {
  const std::string dir = "exp_cfg_test";
  const std::string path = write_micro_config(dir);
  const ExperimentConfig cfg = load_experiment_config(path);
  CHECK(cfg.seed == 5);
  CHECK(cfg.channel.doppler_hz == 10.0);
  CHECK(cfg.channel.n_rb == 12);
  CHECK(cfg.predictors.size() == 1);
  CHECK(cfg.predictors[0].kind == PredictorKind::gru);
  CHECK(cfg.sweep.hidden == std::vector<std::size_t>{2, 4});

  SUBCASE("unknown top-level key") {
    std::ofstream f(path, std::ios::app);
    f.close();
    std::ofstream bad((fs::path(dir) / "bad.json").string());
    bad << R"({"seed": 1, "bogus_key": 2})";
    bad.close();
    CHECK_THROWS_WITH_AS(
        static_cast<void>(load_experiment_config((fs::path(dir) / "bad.json").string())),
        doctest::Contains("bogus_key"), std::invalid_argument);
  }
  SUBCASE("unknown nested key") {
    std::ofstream bad((fs::path(dir) / "bad2.json").string());
    bad << R"({"channel": {"doppler_hz": 1.0, "typo_slots": 10}})";
    bad.close();
    CHECK_THROWS_WITH_AS(
        static_cast<void>(load_experiment_config((fs::path(dir) / "bad2.json").string())),
        doctest::Contains("typo_slots"), std::invalid_argument);
  }
  SUBCASE("missing CQI table path is reported with the path") {
    std::ofstream bad((fs::path(dir) / "bad3.json").string());
    bad << R"({"cqi_table_path": "nonexistent_table.json"})";
    bad.close();
    CHECK_THROWS_WITH_AS(
        static_cast<void>(load_experiment_config((fs::path(dir) / "bad3.json").string())),
        doctest::Contains("nonexistent_table.json"), std::invalid_argument);
  }
  fs::remove_all(dir);
}

TEST_CASE("slots_for_windows yields at least the requested window count") {
  for (std::size_t t_csi : {2ul, 4ul, 32ul}) {
    for (std::size_t p : {1ul, 4ul, 7ul}) {
      for (std::size_t want : {1ul, 10ul, 500ul}) {
        const std::size_t n = slots_for_windows(want, t_csi, p);
        PredictorSpec spec;
        spec.kind = PredictorKind::wiener;
        spec.input_len = p;
        spec.t_csi = t_csi;
        std::vector<double> series(n, 0.0);
        CHECK(build_windows(series, spec).n_windows() >= want);
      }
    }
  }
}

TEST_CASE("cmd_generate writes a reproducible manifest and datasets") {
  const std::string dir = "exp_generate_test";
  const std::string path = write_micro_config(dir);
  const ExperimentConfig cfg = load_experiment_config(path);

  cmd_generate(cfg);
  const fs::path manifest = fs::path(cfg.out_dir) / "dataset" / "manifest.json";
  REQUIRE(fs::exists(manifest));
  const std::string first = read_file(manifest.string());
  CHECK(first.find("\"train\": 0.784") != std::string::npos);
  CHECK(first.find("0_gru_train.csv") != std::string::npos);

  const fs::path train_csv = fs::path(cfg.out_dir) / "dataset" / "0_gru_train.csv";
  REQUIRE(fs::exists(train_csv));
  const std::string first_data = read_file(train_csv.string());

  // identical rerun
  cmd_generate(cfg);
  CHECK(read_file(manifest.string()) == first);
  CHECK(read_file(train_csv.string()) == first_data);

  // split sizes within one window of the fractions
  const PredictionBatch train_b = read_batch_csv(train_csv.string());
  const PredictionBatch val_b = read_batch_csv(
      (fs::path(cfg.out_dir) / "dataset" / "0_gru_val.csv").string());
  const PredictionBatch test_b = read_batch_csv(
      (fs::path(cfg.out_dir) / "dataset" / "0_gru_test.csv").string());
  const double total =
      static_cast<double>(train_b.n_windows() + val_b.n_windows() + test_b.n_windows());
  CHECK(std::abs(train_b.n_windows() - 0.784 * total) <= 1.0);
  CHECK(std::abs(val_b.n_windows() - 0.196 * total) <= 1.0);
  fs::remove_all(dir);
}

TEST_CASE("cmd_train writes checkpoints and loss histories") {
  const std::string dir = "exp_train_test";
  const std::string path = write_micro_config(dir);
  const ExperimentConfig cfg = load_experiment_config(path);
  cmd_train(cfg);
  const fs::path ckpt = fs::path(cfg.out_dir) / "models" / "0_gru.ckpt";
  REQUIRE(fs::exists(ckpt));
  const NeuralModel m = load_checkpoint(ckpt.string());
  CHECK(m.kind == PredictorKind::gru);
  CHECK(m.input_len == 4);
  CHECK(m.output_len == 3);
  CHECK(fs::exists(fs::path(cfg.out_dir) / "models" / "0_gru_loss.csv"));
  fs::remove_all(dir);
}

TEST_CASE("cmd_sweep complexity: exact FLOPs column and reproducible bytes") {
  const std::string dir = "exp_sweep_test";
  const std::string path = write_micro_config(dir);
  const ExperimentConfig cfg = load_experiment_config(path);

  const std::string csv = cmd_sweep(cfg, "complexity", 1);
  REQUIRE(fs::exists(csv));
  const std::string first = read_file(csv);

  // header + comment line
  CHECK(first.rfind("# config_hash=", 0) == 0);
  CHECK(first.find("arch,hidden,flops,mse_db") != std::string::npos);

  // FLOPs column matches the closed forms
  std::istringstream in(first);
  std::string line;
  std::getline(in, line);  // comment
  std::getline(in, line);  // header
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    const auto fields = split_csv_line(line);
    REQUIRE(fields.size() == 4);
    PredictorSpec spec;
    spec.kind = predictor_kind_from_string(fields[0]);
    spec.input_len = 4;
    spec.hidden = std::max<std::size_t>(std::stoul(fields[1]), 1);
    spec.t_csi = 4;
    CHECK(std::stoull(fields[2]) == predictor_flops(spec));
    ++rows;
  }
  CHECK(rows == 2 * 3 + 1);  // two hidden sizes x three nets + wiener

  const std::string again = cmd_sweep(cfg, "complexity", 1);
  CHECK(read_file(again) == first);

  CHECK_THROWS_WITH_AS(static_cast<void>(cmd_sweep(cfg, "nonsense", 1)),
                       doctest::Contains("complexity"), std::invalid_argument);
  fs::remove_all(dir);
}

TEST_CASE("cmd_sweep target_strategy: by-CQI FLOPs are exactly 15x") {
  const std::string dir = "exp_sweep_ts_test";
  const std::string path = write_micro_config(dir);
  ExperimentConfig cfg = load_experiment_config(path);
  cfg.sweep.train_windows = 300;
  cfg.train.epochs = 2;

  const std::string csv = cmd_sweep(cfg, "target_strategy", 1);
  std::istringstream in(read_file(csv));
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  std::uint64_t flops_best_wiener = 0, flops_by_wiener = 0;
  std::uint64_t flops_best_gru = 0, flops_by_gru = 0;
  while (std::getline(in, line)) {
    const auto f = split_csv_line(line);
    REQUIRE(f.size() == 4);
    const std::uint64_t flops = std::stoull(f[2]);
    if (f[0] == "wiener" && f[1] == "best_cqi") flops_best_wiener = flops;
    if (f[0] == "wiener" && f[1] == "by_cqi") flops_by_wiener = flops;
    if (f[0] == "gru" && f[1] == "best_cqi") flops_best_gru = flops;
    if (f[0] == "gru" && f[1] == "by_cqi") flops_by_gru = flops;
  }
  CHECK(flops_by_wiener == 15 * flops_best_wiener);
  CHECK(flops_by_gru == 15 * flops_best_gru);
  fs::remove_all(dir);
}
