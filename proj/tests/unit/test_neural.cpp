#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

#include "csipred/neural.hpp"
#include "csipred/predictor.hpp"

using namespace csipred;

namespace {

PredictionBatch random_batch(std::size_t p, std::size_t out, std::size_t rows,
                             std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> dist;
  PredictionBatch batch;
  batch.input_len = p;
  batch.t_csi = out + 1;
  for (std::size_t r = 0; r < rows; ++r) {
    batch.slot_index.push_back(r);
    for (std::size_t i = 0; i < p; ++i) batch.inputs.push_back(dist(rng));
    for (std::size_t i = 0; i < out; ++i) batch.targets_tdd.push_back(dist(rng));
  }
  return batch;
}

std::vector<double> ar1(double rho, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> innov(0.0, std::sqrt(1.0 - rho * rho));
  std::vector<double> x(n);
  x[0] = std::normal_distribution<double>(0.0, 1.0)(rng);
  for (std::size_t i = 1; i < n; ++i) x[i] = rho * x[i - 1] + innov(rng);
  return x;
}

}  // namespace

TEST_CASE("parameter counts") {
  // dnn: D*P + D + out*D + out
  CHECK(neural_param_count(PredictorKind::dnn, 4, 16, 3) == 16 * 4 + 16 + 3 * 16 + 3);
  // gru: 3 gates (U[D], W[DxD], b[D]) + output layer
  CHECK(neural_param_count(PredictorKind::gru, 4, 16, 31) ==
        3 * (16 + 256 + 16) + 31 * 16 + 31);
  // lstm: 4 gates + output layer
  CHECK(neural_param_count(PredictorKind::lstm, 4, 16, 31) ==
        4 * (16 + 256 + 16) + 31 * 16 + 31);
}

TEST_CASE("all-zero parameters give all-zero outputs for every kind") {
  const std::vector<double> window = {0.4, -1.2, 2.0, 0.3};
  for (PredictorKind kind : {PredictorKind::dnn, PredictorKind::gru, PredictorKind::lstm}) {
    NeuralModel m = init_model(kind, 4, 3, 2, 1);
    std::fill(m.params.begin(), m.params.end(), 0.0);
    for (double y : forward(m, window)) CHECK(y == 0.0);
  }
}

TEST_CASE("DNN two-unit hand calculation") {
  NeuralModel m = init_model(PredictorKind::dnn, 2, 2, 1, 5);
  std::fill(m.params.begin(), m.params.end(), 0.0);
  // layout: W1[2x2], b1[2], W2[1x2], b2[1]
  m.params[4] = 0.3;   // b1[0]
  m.params[5] = -0.6;  // b1[1]
  m.params[6] = 1.0;   // W2[0][0]
  m.params[7] = 2.0;   // W2[0][1]
  m.params[8] = 0.1;   // b2[0]
  const auto y = forward(m, std::vector<double>{9.0, -3.0});  // W1 = 0 ignores input
  CHECK(y[0] == doctest::Approx(std::tanh(0.3) + 2.0 * std::tanh(-0.6) + 0.1).epsilon(1e-12));
}

TEST_CASE("identical seeds give identical models and outputs") {
  const auto a = init_model(PredictorKind::gru, 4, 8, 3, 77);
  const auto b = init_model(PredictorKind::gru, 4, 8, 3, 77);
  CHECK(a.params == b.params);
  const std::vector<double> w = {0.1, 0.2, -0.3, 0.4};
  CHECK(forward(a, w) == forward(b, w));
  const auto c = init_model(PredictorKind::gru, 4, 8, 3, 78);
  CHECK(a.params != c.params);
}

TEST_CASE("loss function") {
  CHECK(mse_loss(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0}) == 0.0);
  CHECK(mse_loss(std::vector<double>{1.0}, std::vector<double>{0.0}) == 1.0);
  CHECK(mse_loss(std::vector<double>{1.0, 2.0}, std::vector<double>{0.0, 0.0}) ==
        doctest::Approx(2.5));
  CHECK_THROWS_AS(mse_loss(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}),
                  std::domain_error);
}

TEST_CASE("gradients vanish at the zero fixed point") {
  NeuralModel m = init_model(PredictorKind::dnn, 2, 3, 2, 1);
  std::fill(m.params.begin(), m.params.end(), 0.0);
  PredictionBatch batch;
  batch.input_len = 2;
  batch.t_csi = 3;
  batch.slot_index = {0, 1};
  batch.inputs = {0.0, 0.0, 0.0, 0.0};
  batch.targets_tdd = {0.0, 0.0, 0.0, 0.0};
  for (double g : gradients(m, batch)) CHECK(g == 0.0);
}

TEST_CASE("analytic gradients match central finite differences") {
  struct Case {
    PredictorKind kind;
    std::size_t p, d, out;
    double tol;
  };
  for (const Case& c : {Case{PredictorKind::dnn, 1, 1, 1, 1e-6},
                        Case{PredictorKind::dnn, 3, 4, 3, 1e-6},
                        Case{PredictorKind::gru, 3, 2, 2, 1e-4},
                        Case{PredictorKind::lstm, 3, 2, 2, 1e-4}}) {
    const NeuralModel m = init_model(c.kind, c.p, c.d, c.out, 17 + c.p);
    const PredictionBatch batch = random_batch(c.p, c.out, 4, 23 + c.d);
    const auto grad = gradients(m, batch);
    const double h = 1e-5;
    double worst = 0.0;
    for (std::size_t i = 0; i < m.n_params(); ++i) {
      NeuralModel plus = m, minus = m;
      plus.params[i] += h;
      minus.params[i] -= h;
      const double fd = (batch_loss(plus, batch) - batch_loss(minus, batch)) / (2.0 * h);
      worst = std::max(worst, std::abs(grad[i] - fd) / std::max(1.0, std::abs(grad[i])));
    }
    INFO("kind ", to_string(c.kind));
    CHECK(worst < c.tol);
  }
}

TEST_CASE("batch loss is invariant under row permutations") {
  const NeuralModel m = init_model(PredictorKind::gru, 3, 4, 2, 3);
  PredictionBatch batch = random_batch(3, 2, 64, 9);
  const double base = batch_loss(m, batch);

  // permute rows
  std::mt19937_64 rng(31);
  std::vector<std::size_t> order(batch.n_windows());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  PredictionBatch shuffled;
  shuffled.input_len = batch.input_len;
  shuffled.t_csi = batch.t_csi;
  for (std::size_t r : order) {
    shuffled.slot_index.push_back(batch.slot_index[r]);
    for (double v : batch.input_row(r)) shuffled.inputs.push_back(v);
    for (double v : batch.tdd_target_row(r)) shuffled.targets_tdd.push_back(v);
  }
  CHECK(std::abs(batch_loss(m, shuffled) - base) < 1e-12);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  const NeuralModel m = init_model(PredictorKind::dnn, 2, 4, 1, 8);
  const PredictionBatch train_b = random_batch(2, 1, 128, 10);
  const PredictionBatch val_b = random_batch(2, 1, 32, 11);
  TrainConfig tc;
  tc.epochs = 5;
  tc.batch_size = 32;
  tc.learning_rate = 0.0;
  const TrainResult res = train(m, train_b, val_b, tc);
  CHECK(res.model.params == m.params);
  CHECK(res.train_loss.size() == 5);
  for (double l : res.train_loss) CHECK(l == doctest::Approx(res.train_loss[0]));
}

TEST_CASE("DNN learns a realizable linear map") {
  std::mt19937_64 rng(12);
  std::normal_distribution<double> dist;
  PredictionBatch train_b, val_b;
  for (PredictionBatch* b : {&train_b, &val_b}) {
    b->input_len = 2;
    b->t_csi = 2;
    const std::size_t rows = b == &train_b ? 2000 : 400;
    for (std::size_t r = 0; r < rows; ++r) {
      const double x0 = dist(rng), x1 = dist(rng);
      b->slot_index.push_back(r);
      b->inputs.insert(b->inputs.end(), {x0, x1});
      b->targets_tdd.push_back(0.5 * x0);
    }
  }
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 256;
  tc.learning_rate = 5e-3;
  tc.shuffle_seed = 4;
  const TrainResult res = train(init_model(PredictorKind::dnn, 2, 8, 1, 21), train_b, val_b, tc);
  CHECK(res.train_loss.back() < 1e-3);
}

TEST_CASE("GRU approaches the AR(1) analytic MMSE at horizon 1") {
  const double rho = 0.9;
  PredictorSpec spec;
  spec.kind = PredictorKind::gru;
  spec.input_len = 4;
  spec.t_csi = 2;  // windows every 2 slots, target 1 slot ahead
  const auto series = ar1(rho, 24000, 5);
  const auto all = build_windows(series, spec);

  // chronological 80/20 split
  const std::size_t n_train = all.n_windows() * 8 / 10;
  PredictionBatch train_b, val_b;
  train_b.input_len = val_b.input_len = all.input_len;
  train_b.t_csi = val_b.t_csi = all.t_csi;
  for (std::size_t r = 0; r < all.n_windows(); ++r) {
    PredictionBatch& dst = r < n_train ? train_b : val_b;
    dst.slot_index.push_back(all.slot_index[r]);
    for (double v : all.input_row(r)) dst.inputs.push_back(v);
    for (double v : all.tdd_target_row(r)) dst.targets_tdd.push_back(v);
  }

  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 1024;
  tc.patience = 20;
  tc.shuffle_seed = 6;
  const TrainResult res =
      train(init_model(PredictorKind::gru, 4, 16, 1, 33), train_b, val_b, tc);
  const double best_val = *std::min_element(res.val_loss.begin(), res.val_loss.end());
  const double analytic = 1.0 - rho * rho;  // 0.19, i.e. -7.21 dB
  const double gap_db = std::abs(10.0 * std::log10(best_val) - 10.0 * std::log10(analytic));
  INFO("val ", best_val, " analytic ", analytic);
  CHECK(gap_db < 1.0);
}

TEST_CASE("non-finite loss aborts training with the epoch in the message") {
  NeuralModel m = init_model(PredictorKind::dnn, 2, 2, 1, 1);
  std::fill(m.params.begin(), m.params.end(), 1e308);
  const PredictionBatch train_b = random_batch(2, 1, 16, 2);
  const PredictionBatch val_b = random_batch(2, 1, 8, 3);
  TrainConfig tc;
  tc.epochs = 3;
  CHECK_THROWS_WITH_AS(static_cast<void>(train(m, train_b, val_b, tc)),
                       doctest::Contains("epoch 1"), std::runtime_error);
}

TEST_CASE("training rejects empty splits") {
  const NeuralModel m = init_model(PredictorKind::dnn, 2, 2, 1, 1);
  const PredictionBatch good = random_batch(2, 1, 8, 2);
  PredictionBatch empty;
  empty.input_len = 2;
  empty.t_csi = 2;
  TrainConfig tc;
  CHECK_THROWS_AS(static_cast<void>(train(m, empty, good, tc)), std::invalid_argument);
  CHECK_THROWS_AS(static_cast<void>(train(m, good, empty, tc)), std::invalid_argument);
}

TEST_CASE("instrumented forward FLOPs reproduce the closed forms") {
  for (PredictorKind kind : {PredictorKind::dnn, PredictorKind::gru, PredictorKind::lstm}) {
    for (std::size_t p : {1ul, 2ul, 4ul, 8ul}) {
      for (std::size_t d : {4ul, 16ul, 32ul}) {
        for (std::size_t out : {1ul, 3ul, 31ul}) {
          const NeuralModel m = init_model(kind, p, d, out, 2);
          PredictorSpec spec;
          spec.kind = kind;
          spec.input_len = p;
          spec.hidden = d;
          if (out == 1) {
            spec.t_csi = 2;
            spec.mode = PredictionMode::fdd_scalar;
            spec.fdd_horizon = 1;
          } else {
            spec.t_csi = out + 1;
          }
          CHECK(count_forward_flops(m) == predictor_flops(spec));
        }
      }
    }
  }
}

TEST_CASE("checkpoint round trip preserves behaviour") {
  const NeuralModel m = init_model(PredictorKind::lstm, 4, 6, 3, 91);
  const std::string path = "model_roundtrip.ckpt";
  save_checkpoint(m, path);
  const NeuralModel loaded = load_checkpoint(path);
  CHECK(loaded.kind == m.kind);
  CHECK(loaded.input_len == m.input_len);
  CHECK(loaded.hidden == m.hidden);
  CHECK(loaded.output_len == m.output_len);
  CHECK(loaded.seed == m.seed);
  CHECK(loaded.params == m.params);
  const std::vector<double> w = {0.3, -0.7, 1.1, 0.0};
  CHECK(forward(loaded, w) == forward(m, w));
  std::remove(path.c_str());
}

TEST_CASE("loss history CSV matches the epoch count") {
  const NeuralModel m = init_model(PredictorKind::dnn, 2, 2, 1, 1);
  TrainConfig tc;
  tc.epochs = 4;
  tc.batch_size = 8;
  const TrainResult res = train(m, random_batch(2, 1, 32, 5), random_batch(2, 1, 8, 6), tc);
  const std::string path = "loss_history.csv";
  write_loss_history_csv(res, path);
  std::ifstream in(path);
  std::string line;
  std::size_t lines = 0;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 2 + res.train_loss.size());  // comment + header + epochs
  std::remove(path.c_str());
}
